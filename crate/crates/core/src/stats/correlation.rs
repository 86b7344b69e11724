use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::bayes::{bf10_correlation, DEFAULT_CORRELATION_SCALE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub r_squared: f64,
    pub t: f64,
    pub p_value: f64,
    /// Fisher-z 95% interval.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub bf10: f64,
    pub n: usize,
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("values must be finite".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation undefined for a constant vector".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson_with_bf(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    pearson_with_bf_scale(x, y, DEFAULT_CORRELATION_SCALE)
}

/// Pearson correlation with its two-tailed t test (`df = n - 2`), Fisher-z
/// interval and JZS Bayes factor at prior scale `scale`.
pub fn pearson_with_bf_scale(x: &[f64], y: &[f64], scale: f64) -> Result<CorrelationResult> {
    let n = x.len();
    if n < 4 {
        return Err(Error::InvalidInput(format!("correlation needs n >= 4, got {n}")));
    }
    let r = pearson_r(x, y)?;
    let nf = n as f64;
    let df = nf - 2.0;
    let (t, p_value) = if r.abs() >= 1.0 {
        (r.signum() * f64::INFINITY, 0.0)
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
        (t, 2.0 * dist.sf(t.abs()))
    };
    let zq = Normal::standard().inverse_cdf(0.975);
    let (ci_lo, ci_hi) = if r.abs() >= 1.0 {
        (r, r)
    } else {
        let z = r.atanh();
        let se = 1.0 / (nf - 3.0).sqrt();
        ((z - zq * se).tanh(), (z + zq * se).tanh())
    };
    Ok(CorrelationResult {
        r,
        r_squared: r * r,
        t,
        p_value,
        ci_lo,
        ci_hi,
        bf10: bf10_correlation(r, n, scale),
        n,
    })
}
