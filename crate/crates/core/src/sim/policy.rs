//! The three sampling policies run against a virtual participant.

use serde::{Deserialize, Serialize};

use super::participant::{halton_point, VirtualParticipant};
use crate::acquisition::{primer_sequence, AdaptiveRun};
use crate::domain::{FeasibilityConstraints, StimulusParams, TrialOutcome, K_MAX, K_MIN, L_MAX};
use crate::error::{Error, Result};
use crate::gp::{FitConfig, GridSpec, PosteriorGrid};
use crate::isocontour::{
    extract_level, standardize_posterior, standardized_curve, CurveSource, StandardizationConfig, ThresholdCurve,
    N_K,
};
use crate::staircase::StaircaseState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    IndependentStaircase,
    Halton,
    Active,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::IndependentStaircase, Policy::Halton, Policy::Active];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::IndependentStaircase => "staircase",
            Policy::Halton => "halton",
            Policy::Active => "active",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "staircase" | "independent_staircase" => Ok(Policy::IndependentStaircase),
            "halton" => Ok(Policy::Halton),
            "active" => Ok(Policy::Active),
            other => Err(Error::InvalidInput(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub constraints: FeasibilityConstraints,
    pub fit: FitConfig,
    /// Grid searched by the active policy.
    pub acquisition_grid: GridSpec,
    /// Phantoms in the online model from the first step.
    pub model_phantoms: Vec<TrialOutcome>,
    pub band_levels: (f64, f64),
    pub rmse_rule: RmseRule,
    pub record_bands: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            constraints: FeasibilityConstraints::default(),
            fit: FitConfig::default(),
            acquisition_grid: GridSpec::default(),
            model_phantoms: StandardizationConfig::default().boundary_outcomes(),
            band_levels: (0.3, 0.7),
            rmse_rule: RmseRule::Censored,
            record_bands: true,
        }
    }
}

/// How a missing crossing enters the error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RmseRule {
    /// A missing crossing is read at the edge it falls past: `L = K` when
    /// the curve starts below the level, `L = 16` when it never drops
    /// below it. Compared at every `K` where either curve is present.
    Censored,
    /// Compared where the truth is present; a missing estimate there costs
    /// a fixed amount.
    AbsentPenalty { penalty: f64 },
}

/// A level curve together with the side each missing crossing falls on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoredCurve {
    pub values: [f64; N_K],
    pub present: [bool; N_K],
}

impl CensoredCurve {
    /// Reads the direction of each absent crossing off the integer-`K`
    /// rows of `grid`.
    pub fn from_grid(curve: &ThresholdCurve, grid: &PosteriorGrid, level: f64) -> Self {
        let mut values = [L_MAX as f64; N_K];
        let mut present = [false; N_K];
        for i in 0..N_K {
            let k = (K_MIN + i as u32) as f64;
            if let Some(v) = curve.psi_by_k[i] {
                values[i] = v;
                present[i] = true;
                continue;
            }
            let ki = grid.k_axis.iter().position(|&x| (x - k).abs() < 1e-9);
            let li = grid.l_axis.iter().position(|&l| l >= k - 1e-9);
            if let (Some(ki), Some(li)) = (ki, li) {
                if grid.p(li, ki) < level {
                    values[i] = k;
                }
            }
        }
        Self { values, present }
    }

    pub fn curve(&self) -> ThresholdCurve {
        let mut psi = [None; N_K];
        for i in 0..N_K {
            if self.present[i] {
                psi[i] = Some(self.values[i]);
            }
        }
        ThresholdCurve::new(psi, CurveSource::AdaptivePosterior)
    }
}

/// Root mean square difference between two level curves, or `None` when
/// no `K` qualifies for comparison.
pub fn censored_rmse(estimate: &CensoredCurve, truth: &CensoredCurve, rule: RmseRule) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..N_K {
        let d = match rule {
            RmseRule::Censored if estimate.present[i] || truth.present[i] => estimate.values[i] - truth.values[i],
            RmseRule::AbsentPenalty { penalty } if truth.present[i] => {
                if estimate.present[i] {
                    estimate.values[i] - truth.values[i]
                } else {
                    penalty
                }
            }
            _ => continue,
        };
        sum += d * d;
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Error over every `K` where the truth is present, charging
/// `absent_penalty` where the estimate is missing.
pub fn isocontour_rmse(estimate: &ThresholdCurve, truth: &ThresholdCurve, absent_penalty: f64) -> Option<f64> {
    let wrap = |c: &ThresholdCurve| CensoredCurve {
        values: c.psi_by_k.map(|v| v.unwrap_or(f64::NAN)),
        present: c.psi_by_k.map(|v| v.is_some()),
    };
    censored_rmse(&wrap(estimate), &wrap(truth), RmseRule::AbsentPenalty { penalty: absent_penalty })
}

/// Level curves at the band levels: the lower probability gives the
/// larger-`L` curve.
pub fn band_curves(grid: &PosteriorGrid, levels: (f64, f64)) -> Result<(ThresholdCurve, ThresholdCurve)> {
    if !(levels.0 > 0.0 && levels.0 < levels.1 && levels.1 < 1.0) {
        return Err(Error::InvalidInput(format!("band levels {levels:?} must satisfy 0 < lo < hi < 1")));
    }
    Ok((extract_level(grid, levels.0)?, extract_level(grid, levels.1)?))
}

/// One-up/one-down staircases at every `K`, visited in turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaircaseCycle {
    pub stairs: Vec<StaircaseState>,
    pub cursor: usize,
    pub resets: u32,
}

impl Default for StaircaseCycle {
    fn default() -> Self {
        Self::new()
    }
}

impl StaircaseCycle {
    pub fn new() -> Self {
        Self { stairs: Self::fresh(), cursor: 0, resets: 0 }
    }

    fn fresh() -> Vec<StaircaseState> {
        (K_MIN..=K_MAX)
            .map(|k| StaircaseState::new(k, k).expect("diagonal start is feasible"))
            .collect()
    }

    /// Index of the staircase that runs next, skipping terminated ones and
    /// starting over once all have terminated.
    fn next_index(&mut self) -> usize {
        if self.stairs.iter().all(|s| s.terminated) {
            self.stairs = Self::fresh();
            self.resets += 1;
        }
        let n = self.stairs.len();
        let i = (0..n)
            .map(|d| (self.cursor + d) % n)
            .find(|&i| !self.stairs[i].terminated)
            .expect("at least one live staircase");
        self.cursor = i;
        i
    }

    pub fn next_params(&mut self) -> StimulusParams {
        let i = self.next_index();
        self.stairs[i].current_params()
    }

    /// Records the outcome for the staircase returned by the last
    /// [`next_params`](Self::next_params) and moves on to the next `K`.
    pub fn record(&mut self, passed: bool, index: u32) -> Result<()> {
        let i = self.cursor;
        self.stairs[i].step_indexed(passed, index)?;
        self.cursor = (i + 1) % self.stairs.len();
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyRun {
    pub policy: Policy,
    pub participant_seed: u64,
    pub budget: usize,
    pub samples: Vec<TrialOutcome>,
    /// Entry `t - 1` is the error after `t` samples.
    pub rmse_by_step: Vec<Option<f64>>,
    pub estimates: Vec<ThresholdCurve>,
    pub band_lo: Vec<ThresholdCurve>,
    pub band_hi: Vec<ThresholdCurve>,
    pub truth: ThresholdCurve,
    pub truth_censored: CensoredCurve,
    pub fallbacks: u32,
}

impl PolicyRun {
    /// Error after `t` samples.
    pub fn rmse_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(1).and_then(|i| self.rmse_by_step.get(i).copied().flatten())
    }
}

/// Runs `policy` for `budget` samples: the two primers, then policy
/// choices, with an online refit and a fresh isocontour after every
/// outcome. The participant's response stream restarts from its seed.
pub fn run_policy(
    participant: &VirtualParticipant,
    policy: Policy,
    budget: usize,
    config: &SimConfig,
) -> Result<PolicyRun> {
    if budget < 3 {
        return Err(Error::InvalidInput(format!("budget {budget} below 3")));
    }
    let mut vp = participant.clone();
    vp.reset();
    let truth = vp.truth_curve();
    let truth_censored = vp.truth_censored();
    let mut run = AdaptiveRun::new(
        config.constraints.clone(),
        config.fit.clone(),
        config.acquisition_grid.clone(),
        config.model_phantoms.clone(),
    )?;
    let slices = GridSpec::threshold_slices();
    let primers = primer_sequence();
    let mut stairs = StaircaseCycle::new();
    let mut halton_index = 0u64;
    let mut out = PolicyRun {
        policy,
        participant_seed: vp.seed,
        budget,
        samples: Vec::with_capacity(budget),
        rmse_by_step: Vec::with_capacity(budget),
        estimates: Vec::with_capacity(budget),
        band_lo: Vec::new(),
        band_hi: Vec::new(),
        truth,
        truth_censored,
        fallbacks: 0,
    };
    for t in 0..budget {
        let params = if t < primers.len() {
            primers[t]
        } else {
            match policy {
                Policy::Active => run.recommend()?,
                Policy::Halton => {
                    halton_index += 1;
                    halton_point(halton_index, &config.constraints, run.outcomes())?
                }
                Policy::IndependentStaircase => stairs.next_params(),
            }
        };
        let passed = vp.respond(params);
        let outcome = run.observe(params, passed)?;
        if policy == Policy::IndependentStaircase && t >= primers.len() {
            stairs.record(passed, outcome.index)?;
        }
        if run.state().fit_diagnostics.update == crate::gp::UpdateKind::Fallback {
            out.fallbacks += 1;
        }
        out.samples.push(outcome);
        let grid = run.state().predict_grid(&slices)?;
        let estimate = extract_level(&grid, 0.5)?;
        let censored = CensoredCurve::from_grid(&estimate, &grid, 0.5);
        out.rmse_by_step.push(censored_rmse(&censored, &out.truth_censored, config.rmse_rule));
        out.estimates.push(estimate);
        if config.record_bands {
            let (lo, hi) = band_curves(&grid, config.band_levels)?;
            out.band_lo.push(lo);
            out.band_hi.push(hi);
        }
    }
    Ok(out)
}

/// One-shot standardized posterior over the first `budget` samples of a
/// run: its isocontour and band curves.
pub fn budget_snapshot(
    run: &PolicyRun,
    budget: usize,
    standardization: &StandardizationConfig,
    config: &SimConfig,
) -> Result<(ThresholdCurve, ThresholdCurve, ThresholdCurve)> {
    let n = budget.min(run.samples.len());
    let state = standardize_posterior(&run.samples[..n], &config.constraints, standardization, &config.fit)?;
    let curve = standardized_curve(&state)?;
    let grid = state.predict_grid(&GridSpec::threshold_slices())?;
    let (lo, hi) = band_curves(&grid, config.band_levels)?;
    Ok((curve, lo, hi))
}
