//! Jeffreys–Zellner–Siow Bayes factors by one-dimensional integration over
//! the prior scale mixture `g`.

use std::f64::consts::PI;

use super::quadrature::log_integral_positive_axis;

/// Relative tolerance of the marginal-likelihood integrals.
pub const INTEGRATION_TOLERANCE: f64 = 1e-8;

/// Cauchy scale on the standardized effect for t-tests.
pub const DEFAULT_T_SCALE: f64 = 0.707;

/// Scale of the Zellner–Siow prior for a correlation.
pub const DEFAULT_CORRELATION_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// `ln BF10` of a one-sample (or paired) t statistic from `n` values with
/// a Cauchy(0, `scale`) prior on the effect size.
pub fn ln_bf10_one_sample(t: f64, n: usize, scale: f64) -> f64 {
    let nf = n as f64;
    let nu = nf - 1.0;
    let null = -(nu + 1.0) / 2.0 * (1.0 + t * t / nu).ln();
    let r2 = scale * scale;
    let log_f = |g: f64| {
        let a = 1.0 + nf * g * r2;
        -0.5 * a.ln() - (nu + 1.0) / 2.0 * (1.0 + t * t / (a * nu)).ln() - 0.5 * (2.0 * PI).ln()
            - 1.5 * g.ln()
            - 1.0 / (2.0 * g)
    };
    log_integral_positive_axis(log_f, INTEGRATION_TOLERANCE) - null
}

pub fn bf10_one_sample(t: f64, n: usize, scale: f64) -> f64 {
    ln_bf10_one_sample(t, n, scale).exp()
}

/// `ln BF10` for a Pearson correlation `r` from `n` pairs, as the
/// single-predictor regression with `g ~ InvGamma(1/2, n * scale^2 / 2)`.
pub fn ln_bf10_correlation(r: f64, n: usize, scale: f64) -> f64 {
    let nf = n as f64;
    let b = nf * scale * scale / 2.0;
    let one_minus_r2 = (1.0 - r * r).max(0.0);
    let log_f = |g: f64| {
        (nf - 2.0) / 2.0 * g.ln_1p() - (nf - 1.0) / 2.0 * (one_minus_r2 * g).ln_1p() + 0.5 * b.ln()
            - 0.5 * PI.ln()
            - 1.5 * g.ln()
            - b / g
    };
    log_integral_positive_axis(log_f, INTEGRATION_TOLERANCE)
}

pub fn bf10_correlation(r: f64, n: usize, scale: f64) -> f64 {
    ln_bf10_correlation(r, n, scale).exp()
}
