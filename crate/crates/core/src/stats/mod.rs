//! Agreement, correlation, t tests, Bayes factors and outlier fences.

pub mod bayes;
pub mod correlation;
pub mod icc;
pub mod quadrature;
pub mod quantile;
pub mod ttest;

pub use bayes::{bf10_correlation, bf10_one_sample, DEFAULT_CORRELATION_SCALE, DEFAULT_T_SCALE};
pub use correlation::{pearson_r, pearson_with_bf, pearson_with_bf_scale, CorrelationResult};
pub use icc::{icc_2_1, AgreementResult};
pub use quantile::{iqr_fence_outliers, iqr_fences, quantile, DEFAULT_FENCE};
pub use ttest::{one_sample_t, paired_t, paired_t_samples, TTestResult};

/// Root mean square of the values.
pub fn rmse(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1).
pub fn sd(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)).sqrt()
}
