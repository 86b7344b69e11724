//! Maximum-entropy stimulus selection and the adaptive trial loop.

use serde::{Deserialize, Serialize};

use crate::domain::{cap_history, snap_to_feasible, FeasibilityConstraints, StimulusParams, TrialOutcome};
use crate::error::{Error, Result};
use crate::gp::{self, binary_entropy, FitConfig, GpModelState, GridSpec, PosteriorGrid};
use crate::isocontour::{extract_level, ThresholdCurve};

/// The two fixed opening trials of every adaptive session.
pub fn primer_sequence() -> Vec<StimulusParams> {
    vec![
        StimulusParams::new(1, 1).expect("feasible"),
        StimulusParams::new(3, 3).expect("feasible"),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Entropies within this distance of the maximum count as tied.
    pub tie_tolerance: f64,
    /// Tolerance for the rule that avoids repeating the previous trial.
    pub repeat_tolerance: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            tie_tolerance: 1e-9,
            repeat_tolerance: 1e-6,
        }
    }
}

/// Success probability at an arbitrary native point by bilinear
/// interpolation of the grid (clamped to its extent).
pub fn interpolate_p(grid: &PosteriorGrid, l: f64, k: f64) -> f64 {
    fn bracket(axis: &[f64], v: f64) -> (usize, usize, f64) {
        let n = axis.len();
        if n == 1 || v <= axis[0] {
            return (0, 0, 0.0);
        }
        if v >= axis[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let hi = axis.partition_point(|&a| a <= v).min(n - 1);
        let lo = hi - 1;
        (lo, hi, (v - axis[lo]) / (axis[hi] - axis[lo]))
    }
    let (l0, l1, tl) = bracket(&grid.l_axis, l);
    let (k0, k1, tk) = bracket(&grid.k_axis, k);
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    let lo = lerp(grid.p(l0, k0), grid.p(l1, k0), tl);
    let hi = lerp(grid.p(l0, k1), grid.p(l1, k1), tl);
    lerp(lo, hi, tk)
}

pub fn entropy_at(grid: &PosteriorGrid, l: f64, k: f64) -> f64 {
    binary_entropy(interpolate_p(grid, l, k))
}

/// Orders candidates by the tie-break: larger minimum scaled distance to the
/// observed (non-phantom) points, then smaller `L`, then smaller `K`.
fn tie_break_key(
    point: (f64, f64),
    observed: &[(f64, f64)],
    constraints: &FeasibilityConstraints,
) -> f64 {
    observed
        .iter()
        .map(|&o| constraints.distance_scaled(point, o))
        .fold(f64::INFINITY, f64::min)
}

fn better(a: ((f64, f64), f64), b: ((f64, f64), f64)) -> bool {
    // true when `a` wins over `b`
    if (a.1 - b.1).abs() > 1e-12 {
        return a.1 > b.1;
    }
    (a.0 .0, a.0 .1) < (b.0 .0, b.0 .1)
}

/// The continuous grid point selected before snapping.
pub fn select_candidate(
    grid: &PosteriorGrid,
    history: &[TrialOutcome],
    constraints: &FeasibilityConstraints,
    config: &AcquisitionConfig,
) -> Result<(f64, f64)> {
    let inside: Vec<usize> = (0..grid.p_success.len())
        .filter(|&i| {
            let (l, k) = grid.point(i);
            constraints.admits(l, k)
        })
        .collect();
    let h_max = inside
        .iter()
        .map(|&i| grid.entropy[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if !h_max.is_finite() {
        return Err(Error::Config("no grid point lies inside the mask".into()));
    }
    let observed: Vec<(f64, f64)> = history
        .iter()
        .filter(|o| !o.phantom)
        .map(|o| o.params.as_f64())
        .collect();
    let mut best: Option<((f64, f64), f64)> = None;
    for &i in &inside {
        if grid.entropy[i] < h_max - config.tie_tolerance {
            continue;
        }
        let p = grid.point(i);
        let cand = (p, tie_break_key(p, &observed, constraints));
        if best.is_none_or(|b| better(cand, b)) {
            best = Some(cand);
        }
    }
    Ok(best.expect("at least one point attains the maximum").0)
}

/// Next stimulus: entropy argmax over the masked grid, tie-broken by
/// distance from observed points, then snapped to the feasible lattice
/// under the step cap. The previous trial is not repeated while another
/// admissible point is within `repeat_tolerance` of the maximum entropy.
pub fn propose_next(
    grid: &PosteriorGrid,
    history: &[TrialOutcome],
    constraints: &FeasibilityConstraints,
) -> Result<StimulusParams> {
    propose_next_with(grid, history, constraints, &AcquisitionConfig::default())
}

pub fn propose_next_with(
    grid: &PosteriorGrid,
    history: &[TrialOutcome],
    constraints: &FeasibilityConstraints,
    config: &AcquisitionConfig,
) -> Result<StimulusParams> {
    constraints.validate()?;
    let candidate = select_candidate(grid, history, constraints, config)?;
    let cap_points = cap_history(history);
    let snapped = snap_to_feasible(candidate, constraints, &cap_points)?;

    let previous = history.iter().rev().find(|o| !o.phantom).map(|o| o.params);
    if previous != Some(snapped) {
        return Ok(snapped);
    }
    let h_max = (0..grid.entropy.len())
        .filter(|&i| {
            let (l, k) = grid.point(i);
            constraints.admits(l, k)
        })
        .map(|i| grid.entropy[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let caps = constraints.cap_limits(&cap_points);
    let observed: Vec<(f64, f64)> = history
        .iter()
        .filter(|o| !o.phantom)
        .map(|o| o.params.as_f64())
        .collect();
    let mut best: Option<((f64, f64), f64)> = None;
    let mut chosen = None;
    for p in constraints.lattice() {
        if Some(p) == previous || !p.is_feasible() {
            continue;
        }
        if let Some((cl, ck)) = caps {
            if p.l() > cl || p.k() > ck {
                continue;
            }
        }
        let (l, k) = p.as_f64();
        if entropy_at(grid, l, k) < h_max - config.repeat_tolerance {
            continue;
        }
        let cand = ((l, k), tie_break_key((l, k), &observed, constraints));
        if best.is_none_or(|b| better(cand, b)) {
            best = Some(cand);
            chosen = Some(p);
        }
    }
    Ok(chosen.unwrap_or(snapped))
}

/// An adaptive session in progress: primers, online GP updates and
/// entropy proposals. Shared by the live service and the simulator.
#[derive(Clone, Debug)]
pub struct AdaptiveRun {
    pub constraints: FeasibilityConstraints,
    pub fit_config: FitConfig,
    pub grid_spec: GridSpec,
    pub acquisition: AcquisitionConfig,
    state: GpModelState,
    outcomes: Vec<TrialOutcome>,
    grid: Option<PosteriorGrid>,
    n_trials: u32,
}

impl AdaptiveRun {
    /// Starts a session; `phantoms` are folded into the model before any
    /// trial.
    pub fn new(
        constraints: FeasibilityConstraints,
        fit_config: FitConfig,
        grid_spec: GridSpec,
        phantoms: Vec<TrialOutcome>,
    ) -> Result<Self> {
        constraints.validate()?;
        grid_spec.validate()?;
        if let Some(bad) = phantoms.iter().find(|o| !o.phantom) {
            return Err(Error::InvalidInput(format!("{} is not flagged as a phantom", bad.params)));
        }
        let state = if phantoms.is_empty() {
            GpModelState::prior(&fit_config)?
        } else {
            gp::fit(&phantoms, &fit_config)?
        };
        Ok(Self {
            constraints,
            fit_config,
            grid_spec,
            acquisition: AcquisitionConfig::default(),
            state,
            outcomes: phantoms,
            grid: None,
            n_trials: 0,
        })
    }

    pub fn state(&self) -> &GpModelState {
        &self.state
    }

    pub fn outcomes(&self) -> &[TrialOutcome] {
        &self.outcomes
    }

    pub fn n_trials(&self) -> u32 {
        self.n_trials
    }

    /// Posterior on the acquisition grid, computed once per update.
    pub fn posterior_grid(&mut self) -> Result<&PosteriorGrid> {
        if self.grid.is_none() {
            self.grid = Some(self.state.predict_grid(&self.grid_spec)?);
        }
        Ok(self.grid.as_ref().expect("just filled"))
    }

    pub fn recommend(&mut self) -> Result<StimulusParams> {
        let primers = primer_sequence();
        if let Some(p) = primers.get(self.n_trials as usize) {
            return Ok(*p);
        }
        let constraints = self.constraints.clone();
        let acquisition = self.acquisition;
        self.posterior_grid()?;
        let grid = self.grid.as_ref().expect("computed above");
        propose_next_with(grid, &self.outcomes, &constraints, &acquisition)
    }

    /// Records a real trial and updates the model online.
    pub fn observe(&mut self, params: StimulusParams, passed: bool) -> Result<TrialOutcome> {
        let (l, k) = params.as_f64();
        if !self.constraints.bounds.contains(l, k) {
            return Err(Error::Domain(format!("{params} outside the task bounds")));
        }
        let outcome = TrialOutcome::trial(params, passed, self.n_trials + 1);
        self.state = gp::update_online(&self.state, &outcome, &self.fit_config)?;
        self.outcomes.push(outcome);
        self.n_trials += 1;
        self.grid = None;
        Ok(outcome)
    }

    /// Level set of the current model on integer-`K` slices.
    pub fn level_curve(&self, level: f64) -> Result<ThresholdCurve> {
        let grid = self.state.predict_grid(&GridSpec::threshold_slices())?;
        extract_level(&grid, level)
    }
}
