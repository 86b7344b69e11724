//! Two-way random-effects, absolute-agreement, single-measure ICC(2,1).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub icc: f64,
    pub f_stat: f64,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
    /// No variance at all: every value identical.
    pub degenerate: bool,
}

/// Mean squares of the subjects x raters table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSquares {
    pub rows: f64,
    pub columns: f64,
    pub error: f64,
}

pub fn mean_squares(pairs: &[(f64, f64)]) -> MeanSquares {
    let n = pairs.len() as f64;
    let k = 2.0;
    let grand = pairs.iter().map(|p| p.0 + p.1).sum::<f64>() / (n * k);
    let ss_rows: f64 = pairs
        .iter()
        .map(|p| k * ((p.0 + p.1) / k - grand).powi(2))
        .sum();
    let m1 = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let m2 = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_cols = n * ((m1 - grand).powi(2) + (m2 - grand).powi(2));
    let ss_total: f64 = pairs
        .iter()
        .map(|p| (p.0 - grand).powi(2) + (p.1 - grand).powi(2))
        .sum();
    let ss_err = (ss_total - ss_rows - ss_cols).max(0.0);
    MeanSquares {
        rows: ss_rows / (n - 1.0),
        columns: ss_cols / (k - 1.0),
        error: ss_err / ((n - 1.0) * (k - 1.0)),
    }
}

/// ICC(2,1) of two ratings per subject with the F test of
/// `MS_rows / MS_error` and the 95% interval of McGraw and Wong.
pub fn icc_2_1(pairs: &[(f64, f64)]) -> Result<AgreementResult> {
    icc_2_1_alpha(pairs, 0.05)
}

pub fn icc_2_1_alpha(pairs: &[(f64, f64)], alpha: f64) -> Result<AgreementResult> {
    let n_obs = pairs.len();
    if n_obs < 3 {
        return Err(Error::InvalidInput(format!("ICC needs at least 3 pairs, got {n_obs}")));
    }
    if pairs.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::InvalidInput("ratings must be finite".into()));
    }
    let n = n_obs as f64;
    let k = 2.0;
    let ms = mean_squares(pairs);
    let df1 = n - 1.0;
    let df2 = (n - 1.0) * (k - 1.0);
    let scale = pairs.iter().map(|p| p.0.abs().max(p.1.abs())).fold(0.0, f64::max).max(1.0);
    let tiny = 1e-24 * scale * scale;

    if ms.rows <= tiny && ms.columns <= tiny && ms.error <= tiny {
        return Ok(AgreementResult {
            icc: 1.0,
            f_stat: f64::NAN,
            df1,
            df2,
            p_value: f64::NAN,
            ci_lo: 1.0,
            ci_hi: 1.0,
            n: n_obs,
            degenerate: true,
        });
    }

    let icc = (ms.rows - ms.error) / (ms.rows + (k - 1.0) * ms.error + k / n * (ms.columns - ms.error));
    let error_free = ms.error <= tiny;
    let f_stat = if error_free { f64::INFINITY } else { ms.rows / ms.error };
    let p_value = if error_free {
        0.0
    } else {
        FisherSnedecor::new(df1, df2)
            .map_err(|e| Error::Degenerate(e.to_string()))?
            .sf(f_stat)
    };

    let (ci_lo, ci_hi) = if icc >= 1.0 {
        (1.0, 1.0)
    } else {
        let a = k * icc / (n * (1.0 - icc));
        let b = 1.0 + k * icc * (n - 1.0) / (n * (1.0 - icc));
        let v = (a * ms.columns + b * ms.error).powi(2)
            / ((a * ms.columns).powi(2) / (k - 1.0) + (b * ms.error).powi(2) / ((n - 1.0) * (k - 1.0)));
        // both variance terms vanish when rows and columns carry no signal
        let v = if v.is_finite() && v > 0.0 { v } else { df2 };
        let q = 1.0 - alpha / 2.0;
        let f_lo = FisherSnedecor::new(n - 1.0, v)
            .map_err(|e| Error::Degenerate(e.to_string()))?
            .inverse_cdf(q);
        let f_hi = FisherSnedecor::new(v, n - 1.0)
            .map_err(|e| Error::Degenerate(e.to_string()))?
            .inverse_cdf(q);
        let c = k * n - k - n;
        let lo = n * (ms.rows - f_lo * ms.error) / (f_lo * (k * ms.columns + c * ms.error) + n * ms.rows);
        let hi = n * (f_hi * ms.rows - ms.error) / (k * ms.columns + c * ms.error + n * f_hi * ms.rows);
        (lo, hi)
    };

    Ok(AgreementResult {
        icc,
        f_stat,
        df1,
        df2,
        p_value,
        ci_lo,
        ci_hi,
        n: n_obs,
        degenerate: false,
    })
}
