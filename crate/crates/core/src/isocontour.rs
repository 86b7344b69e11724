//! Posterior standardization and level-set extraction along `L`.

use serde::{Deserialize, Serialize};

use crate::domain::{FeasibilityConstraints, PhantomKind, StimulusParams, TrialOutcome, K_MAX, K_MIN};
use crate::error::{Error, Result};
use crate::gp::{self, FitConfig, GpModelState, GridSpec, PosteriorGrid};

pub const N_K: usize = (K_MAX - K_MIN + 1) as usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSource {
    AdaptivePosterior,
    ClassicLogistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(rename = "K")]
    pub k: u32,
    pub psi: Option<f64>,
    pub present: bool,
}

/// The `L` value of a success-probability level at each integer `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub struct ThresholdCurve {
    pub psi_by_k: [Option<f64>; N_K],
    pub source: CurveSource,
}

#[derive(Serialize, Deserialize)]
struct CurveRepr {
    source: CurveSource,
    points: Vec<CurvePoint>,
}

impl From<ThresholdCurve> for CurveRepr {
    fn from(c: ThresholdCurve) -> Self {
        Self {
            source: c.source,
            points: c.points(),
        }
    }
}

impl TryFrom<CurveRepr> for ThresholdCurve {
    type Error = Error;

    fn try_from(r: CurveRepr) -> Result<Self> {
        let mut psi_by_k = [None; N_K];
        for p in r.points {
            if !(K_MIN..=K_MAX).contains(&p.k) {
                return Err(Error::Domain(format!("K = {} out of range", p.k)));
            }
            psi_by_k[(p.k - K_MIN) as usize] = if p.present { p.psi } else { None };
        }
        Ok(Self {
            psi_by_k,
            source: r.source,
        })
    }
}

impl ThresholdCurve {
    pub fn new(psi_by_k: [Option<f64>; N_K], source: CurveSource) -> Self {
        Self { psi_by_k, source }
    }

    pub fn points(&self) -> Vec<CurvePoint> {
        self.psi_by_k
            .iter()
            .enumerate()
            .map(|(i, psi)| CurvePoint {
                k: K_MIN + i as u32,
                psi: *psi,
                present: psi.is_some(),
            })
            .collect()
    }

    pub fn at(&self, k: u32) -> Result<Option<f64>> {
        if !(K_MIN..=K_MAX).contains(&k) {
            return Err(Error::Domain(format!("K = {k} outside {K_MIN}..={K_MAX}")));
        }
        Ok(self.psi_by_k[(k - K_MIN) as usize])
    }

    /// `(K, psi)` for every present value.
    pub fn present(&self) -> Vec<(f64, f64)> {
        self.psi_by_k
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|v| ((K_MIN + i as u32) as f64, v)))
            .collect()
    }
}

/// `psi(K)` from an adaptive posterior curve; `None` marks a session that
/// fails the downstream validity filter at that `K`.
pub fn adaptive_threshold_at_k(curve: &ThresholdCurve, k: u32) -> Result<Option<f64>> {
    curve.at(k)
}

/// Least-squares slope of `psi` against `K` over the present values.
pub fn isocontour_slope(curve: &ThresholdCurve) -> Option<f64> {
    let pts = curve.present();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mk = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mp = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mk) * (p.1 - mp)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mk).powi(2)).sum();
    Some(sxy / sxx)
}

/// Probabilities along `L` at a fixed `K`, interpolating linearly between
/// the two nearest grid rows when `K` is not a row of the grid.
fn row_at(grid: &PosteriorGrid, k: f64) -> Option<Vec<f64>> {
    let ks = &grid.k_axis;
    let n_l = grid.n_l();
    let row = |ki: usize| grid.p_success[ki * n_l..(ki + 1) * n_l].to_vec();
    if let Some(ki) = ks.iter().position(|&v| (v - k).abs() < 1e-9) {
        return Some(row(ki));
    }
    let hi = ks.iter().position(|&v| v > k)?;
    if hi == 0 {
        return None;
    }
    let lo = hi - 1;
    let t = (k - ks[lo]) / (ks[hi] - ks[lo]);
    let (a, b) = (row(lo), row(hi));
    Some(a.iter().zip(&b).map(|(x, y)| x + t * (y - x)).collect())
}

/// First downward crossing of `level` along `L`, starting at the lowest
/// feasible `L` (`L >= K`).
pub fn first_crossing(l_axis: &[f64], p: &[f64], k: f64, level: f64) -> Option<f64> {
    let start = l_axis.iter().position(|&l| l >= k - 1e-9)?;
    if p[start] < level {
        return None;
    }
    (start..l_axis.len() - 1).find_map(|i| {
        let (p0, p1) = (p[i], p[i + 1]);
        (p0 >= level && level > p1)
            .then(|| l_axis[i] + (p0 - level) / (p0 - p1) * (l_axis[i + 1] - l_axis[i]))
    })
}

/// Level set of `p(L, K) = level` at every integer `K`.
pub fn extract_level(grid: &PosteriorGrid, level: f64) -> Result<ThresholdCurve> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level {level} outside (0, 1)")));
    }
    let mut psi_by_k = [None; N_K];
    for (i, slot) in psi_by_k.iter_mut().enumerate() {
        let k = (K_MIN + i as u32) as f64;
        if let Some(row) = row_at(grid, k) {
            *slot = first_crossing(&grid.l_axis, &row, k, level);
        }
    }
    Ok(ThresholdCurve::new(psi_by_k, CurveSource::AdaptivePosterior))
}

/// The 50% performance isocontour.
pub fn extract_isocontour(grid: &PosteriorGrid) -> ThresholdCurve {
    extract_level(grid, 0.5).expect("0.5 is a valid level")
}

/// Which points a color with more passes than fails contributes as positive
/// phantoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotonicityReading {
    /// Feasible points with `L <= K*` at color `K*`, which is `(K*, K*)`.
    #[default]
    FeasibleDiagonal,
    /// Every `(K*, K)` with `K <= K*`.
    FewerColors,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationConfig {
    /// Fixed phantom set as `(point, passed)`.
    pub boundary_phantoms: Vec<(StimulusParams, bool)>,
    pub monotonicity: MonotonicityReading,
    pub monotonicity_enabled: bool,
}

impl Default for StandardizationConfig {
    fn default() -> Self {
        let p = |l, k| StimulusParams::new(l, k).expect("corner points are feasible");
        Self {
            boundary_phantoms: vec![(p(1, 1), true), (p(16, 8), false)],
            monotonicity: MonotonicityReading::default(),
            monotonicity_enabled: true,
        }
    }
}

impl StandardizationConfig {
    pub fn boundary_outcomes(&self) -> Vec<TrialOutcome> {
        self.boundary_phantoms
            .iter()
            .map(|&(p, passed)| TrialOutcome::phantom(p, passed, PhantomKind::Boundary))
            .collect()
    }
}

/// Observed (non-phantom) outcomes plus the boundary and monotonicity
/// phantoms, skipping any phantom whose coordinate and label already occur.
pub fn standardization_set(
    outcomes: &[TrialOutcome],
    constraints: &FeasibilityConstraints,
    config: &StandardizationConfig,
) -> Result<Vec<TrialOutcome>> {
    let observed: Vec<TrialOutcome> = outcomes.iter().filter(|o| !o.phantom).copied().collect();
    if observed.is_empty() {
        return Err(Error::InvalidInput("no observed outcomes to standardize".into()));
    }
    let mut set = observed.clone();
    let push = |set: &mut Vec<TrialOutcome>, o: TrialOutcome| -> Result<()> {
        let (l, k) = o.params.as_f64();
        if !constraints.bounds.contains(l, k) {
            return Err(Error::Config(format!("phantom {} outside task bounds", o.params)));
        }
        let dup = set
            .iter()
            .any(|e| e.params == o.params && e.passed == o.passed);
        if !dup {
            set.push(o);
        }
        Ok(())
    };
    for o in config.boundary_outcomes() {
        push(&mut set, o)?;
    }
    if config.monotonicity_enabled {
        for k_star in K_MIN..=K_MAX {
            let at_k = observed.iter().filter(|o| o.params.k() == k_star);
            let passes = at_k.clone().filter(|o| o.passed).count();
            let fails = at_k.filter(|o| !o.passed).count();
            if passes <= fails {
                continue;
            }
            let points: Vec<StimulusParams> = match config.monotonicity {
                MonotonicityReading::FeasibleDiagonal => (1..=k_star)
                    .filter_map(|l| StimulusParams::new(l, k_star).ok())
                    .collect(),
                MonotonicityReading::FewerColors => (K_MIN..=k_star)
                    .filter_map(|k| StimulusParams::new(k_star, k).ok())
                    .collect(),
            };
            for p in points {
                push(&mut set, TrialOutcome::phantom(p, true, PhantomKind::Monotonicity))?;
            }
        }
    }
    Ok(set)
}

/// A single refit over the standardization set.
pub fn standardize_posterior(
    outcomes: &[TrialOutcome],
    constraints: &FeasibilityConstraints,
    config: &StandardizationConfig,
    fit_config: &FitConfig,
) -> Result<GpModelState> {
    let set = standardization_set(outcomes, constraints, config)?;
    gp::fit(&set, fit_config)
}

/// Standardized isocontour read on integer-`K` slices.
pub fn standardized_curve(state: &GpModelState) -> Result<ThresholdCurve> {
    Ok(extract_isocontour(&state.predict_grid(&GridSpec::threshold_slices())?))
}
