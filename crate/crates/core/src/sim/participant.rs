//! Virtual participants: cumulative-normal generators with guess and lapse.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::{
    cap_history, snap_to_feasible, FeasibilityConstraints, StimulusParams, TrialOutcome, K_MAX, K_MIN, L_MAX,
};
use crate::error::{Error, Result};
use super::policy::CensoredCurve;
use crate::isocontour::{ThresholdCurve, N_K};

/// Natural cubic spline through `(x, y)` knots with increasing `x`.
/// Outside the knots it continues linearly with the end slopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidInput(format!("spline needs >= 2 matched knots, got {n}")));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) || x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("spline knots must be finite and increasing".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second-derivative system.
            let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * h[i];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
            }
        }
        Ok(Self { x: x.to_vec(), y: y.to_vec(), m })
    }

    fn slope_at_knot(&self, i: usize) -> f64 {
        let n = self.x.len();
        if i + 1 < n {
            let h = self.x[i + 1] - self.x[i];
            (self.y[i + 1] - self.y[i]) / h - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0
        } else {
            let h = self.x[i] - self.x[i - 1];
            (self.y[i] - self.y[i - 1]) / h + h * (self.m[i - 1] + 2.0 * self.m[i]) / 6.0
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0] + self.slope_at_knot(0) * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1] + self.slope_at_knot(n - 1) * (t - self.x[n - 1]);
        }
        let i = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub spread_floor: f64,
    pub default_spread: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { spread_floor: 0.5, default_spread: 1.0 }
    }
}

/// A simulated observer with success probability
/// `guess + (1 - guess - lapse) * Phi((psi(K) - L) / spread(K))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VirtualParticipant {
    pub psi_spline: NaturalSpline,
    pub psi_by_k: [f64; N_K],
    pub spread_by_k: [f64; N_K],
    pub spread_floor: f64,
    pub guess: f64,
    pub lapse: f64,
    pub seed: u64,
    #[serde(skip, default = "detached_rng")]
    rng: ChaCha8Rng,
}

fn detached_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

pub fn make_virtual_participant(
    curve: &ThresholdCurve,
    guess: f64,
    lapse: f64,
    seed: u64,
) -> Result<VirtualParticipant> {
    let cfg = GeneratorConfig::default();
    make_virtual_participant_with(curve, [cfg.default_spread; N_K], guess, lapse, seed, &cfg)
}

pub fn make_virtual_participant_with(
    curve: &ThresholdCurve,
    spreads: [f64; N_K],
    guess: f64,
    lapse: f64,
    seed: u64,
    config: &GeneratorConfig,
) -> Result<VirtualParticipant> {
    let knots = curve.present();
    if knots.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "generator needs at least 2 present thresholds, got {}",
            knots.len()
        )));
    }
    if !(0.0..0.5).contains(&guess) || !(0.0..0.5).contains(&lapse) {
        return Err(Error::InvalidInput(format!("guess {guess} / lapse {lapse} outside [0, 0.5)")));
    }
    if !(config.spread_floor > 0.0) || spreads.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("spreads must be finite with a positive floor".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
    let spline = NaturalSpline::new(&xs, &ys)?;
    let mut psi_by_k = [0.0; N_K];
    for (i, v) in psi_by_k.iter_mut().enumerate() {
        *v = spline.eval((K_MIN + i as u32) as f64);
    }
    Ok(VirtualParticipant {
        psi_spline: spline,
        psi_by_k,
        spread_by_k: spreads.map(|s| s.max(config.spread_floor)),
        spread_floor: config.spread_floor,
        guess,
        lapse,
        seed,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

fn k_index(k: f64) -> usize {
    (k.round().clamp(K_MIN as f64, K_MAX as f64) as u32 - K_MIN) as usize
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

impl VirtualParticipant {
    /// Restarts the response stream from the seed.
    pub fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    pub fn psi(&self, k: f64) -> f64 {
        self.psi_spline.eval(k)
    }

    pub fn p_pass(&self, l: f64, k: f64) -> f64 {
        let s = self.spread_by_k[k_index(k)];
        let psi = self.psi_by_k[k_index(k)];
        self.guess + (1.0 - self.guess - self.lapse) * normal_cdf((psi - l) / s)
    }

    pub fn respond(&mut self, params: StimulusParams) -> bool {
        let (l, k) = params.as_f64();
        let p = self.p_pass(l, k);
        self.rng.random::<f64>() < p
    }

    /// Unrestricted 50% points of `p_pass` along `L`.
    fn midpoints(&self) -> [f64; N_K] {
        let scale = 1.0 - self.guess - self.lapse;
        let z = Normal::standard().inverse_cdf(((0.5 - self.guess) / scale).clamp(1e-12, 1.0 - 1e-12));
        std::array::from_fn(|i| self.psi_by_k[i] - self.spread_by_k[i] * z)
    }

    /// The analytic 50% crossing along `L` at each `K`; absent when it falls
    /// below the lowest feasible `L` or beyond the task maximum.
    pub fn truth_curve(&self) -> ThresholdCurve {
        self.truth_censored().curve()
    }

    /// The truth with missing crossings read at the edge they fall past.
    pub fn truth_censored(&self) -> CensoredCurve {
        let mid = self.midpoints();
        let mut values = [0.0; N_K];
        let mut present = [false; N_K];
        for i in 0..N_K {
            let k = (K_MIN + i as u32) as f64;
            values[i] = mid[i].clamp(k, L_MAX as f64);
            present[i] = mid[i] >= k && mid[i] <= L_MAX as f64;
        }
        CensoredCurve { values, present }
    }
}

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * f;
        index /= base;
        f *= inv;
    }
    out
}

/// Halton point `index` (from 1) on the unit square: base 2 on `L`, base 3
/// on `K`.
pub fn halton_unit(index: u64) -> (f64, f64) {
    (radical_inverse(index, 2), radical_inverse(index, 3))
}

/// Halton point scaled to the task bounds and snapped against `history`.
pub fn halton_point(
    index: u64,
    constraints: &FeasibilityConstraints,
    history: &[TrialOutcome],
) -> Result<StimulusParams> {
    if index == 0 {
        return Err(Error::InvalidInput("Halton index starts at 1".into()));
    }
    let (u, v) = halton_unit(index);
    let b = &constraints.bounds;
    let l = b.l.0 + u * (b.l.1 - b.l.0);
    let k = b.k.0 + v * (b.k.1 - b.k.0);
    snap_to_feasible((l, k), constraints, &cap_history(history))
}
