use serde::{Deserialize, Serialize};

use crate::domain::{K_MAX, K_MIN, L_MAX, L_MIN};
use crate::error::{Error, Result};

/// Axis vectors of a rectangular evaluation lattice in native units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub l_axis: Vec<f64>,
    pub k_axis: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

impl Default for GridSpec {
    /// 121 x 61 over `L in [1, 16]`, `K in [1, 8]`.
    fn default() -> Self {
        Self::dense(121, 61)
    }
}

impl GridSpec {
    pub fn dense(n_l: usize, n_k: usize) -> Self {
        Self {
            l_axis: linspace(L_MIN as f64, L_MAX as f64, n_l),
            k_axis: linspace(K_MIN as f64, K_MAX as f64, n_k),
        }
    }

    /// Fine `L` spacing (0.125) at every integer `K`; the lattice used for
    /// isocontour extraction.
    pub fn threshold_slices() -> Self {
        Self {
            l_axis: linspace(L_MIN as f64, L_MAX as f64, 121),
            k_axis: (K_MIN..=K_MAX).map(|k| k as f64).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |axis: &[f64]| {
            !axis.is_empty()
                && axis.iter().all(|v| v.is_finite())
                && axis.windows(2).all(|w| w[0] < w[1])
        };
        if ok(&self.l_axis) && ok(&self.k_axis) {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "grid axes must be non-empty, finite and strictly increasing".into(),
            ))
        }
    }

    pub fn len(&self) -> usize {
        self.l_axis.len() * self.k_axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Native points in row-major order (rows indexed by `K`).
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.k_axis
            .iter()
            .flat_map(|&k| self.l_axis.iter().map(move |&l| (l, k)))
            .collect()
    }
}

/// Binary entropy in bits with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term(p) + term(1.0 - p)
}

/// Predictive success probability and entropy on a lattice. Arrays are
/// row-major: entry `ki * l_axis.len() + li` belongs to
/// `(l_axis[li], k_axis[ki])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    pub l_axis: Vec<f64>,
    pub k_axis: Vec<f64>,
    pub p_success: Vec<f64>,
    pub entropy: Vec<f64>,
}

impl PosteriorGrid {
    pub fn from_probabilities(spec: &GridSpec, p_success: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if p_success.len() != spec.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} probabilities, got {}",
                spec.len(),
                p_success.len()
            )));
        }
        if p_success.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput("probabilities must lie in [0, 1]".into()));
        }
        let entropy = p_success.iter().map(|&p| binary_entropy(p)).collect();
        Ok(Self {
            l_axis: spec.l_axis.clone(),
            k_axis: spec.k_axis.clone(),
            p_success,
            entropy,
        })
    }

    /// Evaluates `p(L, K)` on `spec`.
    pub fn from_fn(spec: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let p = spec.points().into_iter().map(|(l, k)| f(l, k)).collect();
        Self::from_probabilities(spec, p)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            l_axis: self.l_axis.clone(),
            k_axis: self.k_axis.clone(),
        }
    }

    pub fn n_l(&self) -> usize {
        self.l_axis.len()
    }

    pub fn n_k(&self) -> usize {
        self.k_axis.len()
    }

    pub fn index(&self, li: usize, ki: usize) -> usize {
        ki * self.n_l() + li
    }

    pub fn p(&self, li: usize, ki: usize) -> f64 {
        self.p_success[self.index(li, ki)]
    }

    pub fn point(&self, idx: usize) -> (f64, f64) {
        (self.l_axis[idx % self.n_l()], self.k_axis[idx / self.n_l()])
    }
}
