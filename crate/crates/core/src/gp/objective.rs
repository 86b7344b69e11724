//! Negative evidence lower bound of the whitened variational classifier and
//! its analytic gradient.
//!
//! The latent values at the `n` distinct sites are `f = mu + L v` where
//! `L L^T = K` and `q(v) = N(m, C C^T)` with `C` lower triangular. The packed
//! parameter vector is
//!
//! ```text
//! [ln l_L, ln l_K, ln s2, ln s2_lin, b0, b1 | m (n) | C lower, row-major (n(n+1)/2)]
//! ```
//!
//! with the diagonal of `C` stored as logarithms. The minimized objective is
//! `-E_q[ln p(y | f)] + KL(q(v) || N(0, I)) - ln p(hyper)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::{GpHyperparameters, N_HYPER};
use super::quadrature::{log_sigmoid, sigmoid, GaussHermite};

/// A distinct training location (scaled coordinates) with its label counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub x: [f64; 2],
    pub passes: u32,
    pub fails: u32,
}

/// Independent Gaussian penalties on the packed hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub mean: [f64; N_HYPER],
    pub sd: [f64; N_HYPER],
}

impl Default for HyperPrior {
    fn default() -> Self {
        let h = GpHyperparameters::default();
        let mut mean = h.pack();
        // decreasing success with spatial load
        mean[5] = -4.0;
        Self {
            mean,
            sd: [0.5, 0.5, 1.0, 1.0, 4.0, 4.0],
        }
    }
}

impl HyperPrior {
    fn penalty(&self, theta: &[f64]) -> (f64, [f64; N_HYPER]) {
        let mut value = 0.0;
        let mut grad = [0.0; N_HYPER];
        for h in 0..N_HYPER {
            let z = (theta[h] - self.mean[h]) / self.sd[h];
            value += 0.5 * z * z;
            grad[h] = z / self.sd[h];
        }
        (value, grad)
    }
}

pub fn packed_len(n: usize) -> usize {
    N_HYPER + n + n * (n + 1) / 2
}

#[inline]
pub fn tri_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// Rebuilds `C` from its packed lower triangle (log diagonal).
pub fn unpack_factor(packed: &[f64], n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            c[(i, j)] = packed[tri_index(i, j)];
        }
        c[(i, i)] = packed[tri_index(i, i)].exp();
    }
    c
}

pub fn pack_factor(c: &DMatrix<f64>) -> Vec<f64> {
    let n = c.nrows();
    let mut out = vec![0.0; n * (n + 1) / 2];
    for i in 0..n {
        for j in 0..i {
            out[tri_index(i, j)] = c[(i, j)];
        }
        out[tri_index(i, i)] = c[(i, i)].max(1e-300).ln();
    }
    out
}

pub struct Evaluation {
    /// The minimized objective (negative ELBO plus hyperprior penalty).
    pub objective: f64,
    pub elbo: f64,
    pub gradient: Vec<f64>,
}

pub struct VariationalProblem<'a> {
    pub sites: &'a [Site],
    pub prior: &'a HyperPrior,
    pub learn_hyperparameters: bool,
    pub jitter: f64,
    pub rule: &'a GaussHermite,
}

impl VariationalProblem<'_> {
    pub fn n(&self) -> usize {
        self.sites.len()
    }

    /// Objective and gradient, or `None` when the covariance cannot be
    /// factorized or any term is non-finite.
    pub fn evaluate(&self, params: &[f64]) -> Option<Evaluation> {
        let n = self.n();
        debug_assert_eq!(params.len(), packed_len(n));
        let hyp = GpHyperparameters::unpack(&params[..N_HYPER]);
        let xs: Vec<[f64; 2]> = self.sites.iter().map(|s| s.x).collect();
        let lk = hyp.gram(&xs, self.jitter).cholesky()?.unpack();
        let m = DVector::from_column_slice(&params[N_HYPER..N_HYPER + n]);
        let packed_c = &params[N_HYPER + n..];
        let c = unpack_factor(packed_c, n);

        let mu = DVector::from_iterator(n, xs.iter().map(|x| hyp.mean(x)));
        let mean_f = &mu + &lk * &m;
        let b = &lk * &c;

        let mut ell = 0.0;
        let mut g_mean = DVector::zeros(n);
        let mut g_var = DVector::zeros(n);
        for (i, site) in self.sites.iter().enumerate() {
            let var = b.row(i).norm_squared();
            let sd = var.sqrt();
            let (np, nf) = (site.passes as f64, site.fails as f64);
            let (mut e, mut gm, mut gs) = (0.0, 0.0, 0.0);
            for (x, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
                let f = mean_f[i] + sd * x;
                e += w * (np * log_sigmoid(f) + nf * log_sigmoid(-f));
                let s = sigmoid(f);
                let d = np * (1.0 - s) - nf * s;
                gm += w * d;
                gs += w * d * x;
            }
            ell += e;
            g_mean[i] = gm;
            g_var[i] = if sd > 0.0 { gs / (2.0 * sd) } else { 0.0 };
        }

        let log_diag_sum: f64 = (0..n).map(|i| packed_c[tri_index(i, i)]).sum();
        let kl = 0.5 * (c.norm_squared() + m.norm_squared() - n as f64) - log_diag_sum;
        let (penalty, penalty_grad) = if self.learn_hyperparameters {
            self.prior.penalty(&params[..N_HYPER])
        } else {
            (0.0, [0.0; N_HYPER])
        };
        let elbo = ell - kl;
        let objective = -elbo + penalty;
        if !objective.is_finite() {
            return None;
        }

        let mut gradient = vec![0.0; params.len()];

        let grad_m = &m - lk.tr_mul(&g_mean);
        gradient[N_HYPER..N_HYPER + n].copy_from_slice(grad_m.as_slice());

        // d ELL / d B = 2 diag(g_var) B
        let mut b_bar = b.clone();
        for i in 0..n {
            b_bar.row_mut(i).scale_mut(2.0 * g_var[i]);
        }
        let c_bar = lk.tr_mul(&b_bar);
        let gc = &mut gradient[N_HYPER + n..];
        for i in 0..n {
            for j in 0..i {
                gc[tri_index(i, j)] = c[(i, j)] - c_bar[(i, j)];
            }
            let cii = c[(i, i)];
            gc[tri_index(i, i)] = (cii - c_bar[(i, i)]) * cii - 1.0;
        }

        if self.learn_hyperparameters {
            // Adjoint of the Cholesky factor, then back to K.
            let mut l_bar = &g_mean * m.transpose() + &b_bar * c.transpose();
            l_bar.fill_upper_triangle(0.0, 1);
            let mut p = lk.tr_mul(&l_bar);
            p.fill_upper_triangle(0.0, 1);
            for i in 0..n {
                p[(i, i)] *= 0.5;
            }
            let x = lk.tr_solve_lower_triangular(&p)?;
            let g = lk.tr_solve_lower_triangular(&x.transpose())?.transpose();
            let g_sym = (&g + g.transpose()) * 0.5;
            let dk = hyp.contract_gradient(&xs, &g_sym);
            let db0: f64 = g_mean.sum();
            let db1: f64 = g_mean.iter().zip(&xs).map(|(g, x)| g * x[0]).sum();
            let d_ell = [dk[0], dk[1], dk[2], dk[3], db0, db1];
            for h in 0..N_HYPER {
                gradient[h] = -d_ell[h] + penalty_grad[h];
            }
        }

        if gradient.iter().any(|g| !g.is_finite()) {
            return None;
        }
        Some(Evaluation {
            objective,
            elbo,
            gradient,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sites() -> Vec<Site> {
        vec![
            Site { x: [0.0, 0.0], passes: 2, fails: 0 },
            Site { x: [2.0 / 15.0, 2.0 / 7.0], passes: 1, fails: 0 },
            Site { x: [0.4, 0.1], passes: 1, fails: 1 },
            Site { x: [0.6, 0.5], passes: 0, fails: 2 },
            Site { x: [1.0, 1.0], passes: 0, fails: 1 },
        ]
    }

    #[test]
    fn factor_packing_round_trip() {
        let c = DMatrix::from_fn(4, 4, |i, j| if j > i { 0.0 } else if i == j { 0.5 + i as f64 } else { 0.1 * (i + j) as f64 });
        let back = unpack_factor(&pack_factor(&c), 4);
        assert!((back - c).abs().max() < 1e-14);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let sites = sites();
        let prior = HyperPrior::default();
        let rule = GaussHermite::new(20);
        let problem = VariationalProblem {
            sites: &sites,
            prior: &prior,
            learn_hyperparameters: true,
            jitter: 1e-6,
            rule: &rule,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = sites.len();
        let mut params = vec![0.0; packed_len(n)];
        params[..N_HYPER].copy_from_slice(&GpHyperparameters::default().pack());
        for p in params.iter_mut().skip(N_HYPER) {
            *p = rng.random_range(-0.5..0.5);
        }
        let eval = problem.evaluate(&params).unwrap();
        let h = 1e-6;
        for idx in 0..params.len() {
            let mut up = params.clone();
            let mut dn = params.clone();
            up[idx] += h;
            dn[idx] -= h;
            let fd = (problem.evaluate(&up).unwrap().objective
                - problem.evaluate(&dn).unwrap().objective)
                / (2.0 * h);
            let a = eval.gradient[idx];
            assert!(
                (a - fd).abs() <= 1e-5 * a.abs().max(fd.abs()).max(1.0),
                "param {idx}: analytic {a}, fd {fd}"
            );
        }
    }

    #[test]
    fn frozen_hyperparameters_have_zero_gradient() {
        let sites = sites();
        let prior = HyperPrior::default();
        let rule = GaussHermite::new(12);
        let problem = VariationalProblem {
            sites: &sites,
            prior: &prior,
            learn_hyperparameters: false,
            jitter: 1e-6,
            rule: &rule,
        };
        let mut params = vec![0.0; packed_len(sites.len())];
        params[..N_HYPER].copy_from_slice(&GpHyperparameters::default().pack());
        let eval = problem.evaluate(&params).unwrap();
        assert!(eval.gradient[..N_HYPER].iter().all(|g| *g == 0.0));
    }
}
