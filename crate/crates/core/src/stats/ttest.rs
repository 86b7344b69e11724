use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::bayes::{bf10_one_sample, DEFAULT_T_SCALE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub mean: f64,
    /// Student-t 95% interval of the mean.
    pub ci: (f64, f64),
    pub bf10: f64,
    pub cohens_dz: f64,
    pub n: usize,
    /// The values have no spread.
    pub degenerate: bool,
}

/// Two-sided one-sample t test of `mean(diffs) = 0`.
pub fn paired_t(diffs: &[f64]) -> Result<TTestResult> {
    one_sample_t(diffs, DEFAULT_T_SCALE)
}

/// Paired test on two matched samples.
pub fn paired_t_samples(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    paired_t(&d)
}

pub fn one_sample_t(values: &[f64], scale: f64) -> Result<TTestResult> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("t test needs n >= 2, got {n}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("values must be finite".into()));
    }
    let nf = n as f64;
    let df = nf - 1.0;
    let mean = values.iter().sum::<f64>() / nf;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / df).sqrt();
    if sd == 0.0 {
        let (t, p) = if mean == 0.0 { (0.0, 1.0) } else { (mean.signum() * f64::INFINITY, 0.0) };
        return Ok(TTestResult {
            t,
            df,
            p_value: p,
            mean,
            ci: (mean, mean),
            bf10: if mean == 0.0 { 0.0 } else { f64::INFINITY },
            cohens_dz: if mean == 0.0 { 0.0 } else { t },
            n,
            degenerate: true,
        });
    }
    let se = sd / nf.sqrt();
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
    let p_value = 2.0 * dist.sf(t.abs());
    let q = dist.inverse_cdf(0.975);
    Ok(TTestResult {
        t,
        df,
        p_value,
        mean,
        ci: (mean - q * se, mean + q * se),
        bf10: bf10_one_sample(t, n, scale),
        cohens_dz: mean / sd,
        n,
        degenerate: false,
    })
}
