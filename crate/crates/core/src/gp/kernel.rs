//! Covariance and prior mean over scaled `(L, K)`.
//!
//! ```text
//! k(x, x') = s2 * exp(-0.5 * sum_d ((x_d - x'_d) / l_d)^2) + s2_lin * x_L * x'_L
//! m(x)     = b0 + b1 * x_L
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of entries in the packed (unconstrained) hyperparameter vector.
pub const N_HYPER: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparameters {
    /// Squared-exponential lengthscales on the scaled L and K axes.
    pub kernel_lengthscales: [f64; 2],
    /// Squared-exponential signal variance.
    pub kernel_variance: f64,
    /// Variance of the linear kernel term on the scaled L axis.
    pub linear_variance: f64,
    /// Prior mean `[intercept, slope along scaled L]`; flat in K.
    pub mean_function_params: [f64; 2],
}

impl Default for GpHyperparameters {
    fn default() -> Self {
        Self {
            kernel_lengthscales: [0.25, 0.4],
            kernel_variance: 4.0,
            linear_variance: 16.0,
            mean_function_params: [0.0, 0.0],
        }
    }
}

impl GpHyperparameters {
    pub fn validate(&self) -> Result<()> {
        let positive = self
            .kernel_lengthscales
            .iter()
            .chain([&self.kernel_variance, &self.linear_variance])
            .all(|v| v.is_finite() && *v > 0.0);
        let finite_mean = self.mean_function_params.iter().all(|v| v.is_finite());
        if positive && finite_mean {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid hyperparameters {self:?}")))
        }
    }

    /// `[ln l_L, ln l_K, ln s2, ln s2_lin, b0, b1]`
    pub fn pack(&self) -> [f64; N_HYPER] {
        [
            self.kernel_lengthscales[0].ln(),
            self.kernel_lengthscales[1].ln(),
            self.kernel_variance.ln(),
            self.linear_variance.ln(),
            self.mean_function_params[0],
            self.mean_function_params[1],
        ]
    }

    pub fn unpack(theta: &[f64]) -> Self {
        Self {
            kernel_lengthscales: [theta[0].exp(), theta[1].exp()],
            kernel_variance: theta[2].exp(),
            linear_variance: theta[3].exp(),
            mean_function_params: [theta[4], theta[5]],
        }
    }

    pub fn mean(&self, x: &[f64; 2]) -> f64 {
        self.mean_function_params[0] + self.mean_function_params[1] * x[0]
    }

    pub fn prior_variance(&self, x: &[f64; 2]) -> f64 {
        self.kernel_variance + self.linear_variance * x[0] * x[0]
    }

    #[inline]
    fn se(&self, a: &[f64; 2], b: &[f64; 2]) -> f64 {
        let dl = (a[0] - b[0]) / self.kernel_lengthscales[0];
        let dk = (a[1] - b[1]) / self.kernel_lengthscales[1];
        self.kernel_variance * (-0.5 * (dl * dl + dk * dk)).exp()
    }

    pub fn k(&self, a: &[f64; 2], b: &[f64; 2]) -> f64 {
        self.se(a, b) + self.linear_variance * a[0] * b[0]
    }

    /// Training covariance with `jitter` added to the diagonal.
    pub fn gram(&self, xs: &[[f64; 2]], jitter: f64) -> DMatrix<f64> {
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = self.k(&xs[i], &xs[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(j, j)] += jitter;
        }
        k
    }

    pub fn cross(&self, xs: &[[f64; 2]], stars: &[[f64; 2]]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), stars.len(), |i, j| self.k(&xs[i], &stars[j]))
    }

    /// `sum_ij G_ij dK_ij / d theta_h` for the four kernel entries of the
    /// packed vector; mean parameters do not enter the covariance.
    pub fn contract_gradient(&self, xs: &[[f64; 2]], g: &DMatrix<f64>) -> [f64; 4] {
        let n = xs.len();
        let inv_l2 = [
            1.0 / self.kernel_lengthscales[0].powi(2),
            1.0 / self.kernel_lengthscales[1].powi(2),
        ];
        let mut out = [0.0; 4];
        for j in 0..n {
            for i in 0..n {
                let gij = g[(i, j)];
                if gij == 0.0 {
                    continue;
                }
                let dl2 = (xs[i][0] - xs[j][0]).powi(2) * inv_l2[0];
                let dk2 = (xs[i][1] - xs[j][1]).powi(2) * inv_l2[1];
                let se = self.kernel_variance * (-0.5 * (dl2 + dk2)).exp();
                out[0] += gij * se * dl2;
                out[1] += gij * se * dk2;
                out[2] += gij * se;
                out[3] += gij * self.linear_variance * xs[i][0] * xs[j][0];
            }
        }
        out
    }
}
