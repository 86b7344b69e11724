use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of empty data".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("values must be finite".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&s, q))
}

/// `(lower, upper)` Tukey fences at `k` interquartile ranges.
pub fn iqr_fences(values: &[f64], k: f64) -> Result<(f64, f64)> {
    if values.len() < 4 {
        return Err(Error::InvalidInput(format!("IQR fence needs n >= 4, got {}", values.len())));
    }
    let q1 = quantile(values, 0.25)?;
    let q3 = quantile(values, 0.75)?;
    let iqr = q3 - q1;
    Ok((q1 - k * iqr, q3 + k * iqr))
}

/// Indices of values strictly outside the fences.
pub fn iqr_fence_outliers(values: &[f64], k: f64) -> Result<BTreeSet<usize>> {
    let (lo, hi) = iqr_fences(values, k)?;
    Ok(values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < lo || v > hi)
        .map(|(i, _)| i)
        .collect())
}

pub const DEFAULT_FENCE: f64 = 1.5;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numpy_linear_percentiles() {
        let x = [3.1, -2.0, 5.0, 7.5, 1.0, 1.0, 9.0, 4.0, 4.4, 0.0];
        let expect = [(0.25, 1.0), (0.5, 3.55), (0.75, 4.85), (0.1, -0.2), (0.9, 7.65)];
        for (q, e) in expect {
            assert!((quantile(&x, q).unwrap() - e).abs() < 1e-12, "q = {q}");
        }
    }

    #[test]
    fn gross_outlier_flagged() {
        let out = iqr_fence_outliers(&[1.0, 2.0, 3.0, 4.0, 100.0], DEFAULT_FENCE).unwrap();
        assert_eq!(out.into_iter().collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn ramp_has_no_outliers() {
        let ramp: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!(iqr_fence_outliers(&ramp, DEFAULT_FENCE).unwrap().is_empty());
    }

    #[test]
    fn crafted_list_matches_direct_inequality() {
        let v = [-9.0, 0.5, 1.0, 1.2, 1.9, 2.0, 2.4, 7.0];
        // sorted already; type-7 positions 1.75 and 5.25
        let q1 = 1.0 + 0.75 * (1.2 - 1.0);
        let q3 = 2.0 + 0.25 * (2.4 - 2.0);
        let (lo, hi) = (q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1));
        let expect: BTreeSet<usize> = (0..v.len()).filter(|&i| v[i] < lo || v[i] > hi).collect();
        assert_eq!(iqr_fence_outliers(&v, 1.5).unwrap(), expect);
        assert_eq!(expect.into_iter().collect::<Vec<_>>(), vec![0, 7]);
    }

    #[test]
    fn short_input_rejected() {
        assert!(iqr_fence_outliers(&[1.0, 2.0, 3.0], 1.5).is_err());
    }
}
