//! One-up/one-down staircase on `L` and the logistic threshold fit used to
//! score it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{StimulusParams, TrialOutcome, L_MAX, L_MIN};
use crate::error::{Error, Result};

/// Color count of the classic staircase.
pub const CLASSIC_K: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    TwoFailsSameL,
    ReachedMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaircaseState {
    pub current_l: u32,
    pub fixed_k: u32,
    /// Lowest `L` the staircase may step down to.
    pub floor_l: u32,
    pub fail_counts: BTreeMap<u32, u32>,
    pub trial_log: Vec<TrialOutcome>,
    pub terminated: bool,
    pub termination_reason: Option<TerminationReason>,
}

impl StaircaseState {
    /// A staircase at color `fixed_k` starting (and floored) at `start_l`.
    pub fn new(fixed_k: u32, start_l: u32) -> Result<Self> {
        StimulusParams::nominal(start_l, fixed_k)?;
        Ok(Self {
            current_l: start_l,
            fixed_k,
            floor_l: start_l,
            fail_counts: BTreeMap::new(),
            trial_log: Vec::new(),
            terminated: false,
            termination_reason: None,
        })
    }

    /// The classic-mode sequence: `K = 3` starting at `L = 1`.
    pub fn classic() -> Self {
        Self::new(CLASSIC_K, L_MIN).expect("valid classic start")
    }

    /// The next stimulus. Below `L = K` the point is nominal: it requests
    /// more colors than tiles and renders with `L` colors.
    pub fn current_params(&self) -> StimulusParams {
        StimulusParams::nominal(self.current_l, self.fixed_k).expect("L kept within bounds")
    }

    pub fn n_trials(&self) -> usize {
        self.trial_log.len()
    }

    /// Records an outcome at the current `L` and moves one step.
    pub fn step(&self, passed: bool) -> Result<Self> {
        let mut next = self.clone();
        next.step_mut(passed)?;
        Ok(next)
    }

    pub fn step_mut(&mut self, passed: bool) -> Result<()> {
        self.step_indexed(passed, self.trial_log.len() as u32 + 1)
    }

    /// As [`step_mut`](Self::step_mut) with an explicit trial index, for
    /// staircases interleaved with other trials.
    pub fn step_indexed(&mut self, passed: bool, index: u32) -> Result<()> {
        if self.terminated {
            return Err(Error::State("staircase already terminated".into()));
        }
        let l = self.current_l;
        self.trial_log
            .push(TrialOutcome::trial(self.current_params(), passed, index));
        if passed {
            if l == L_MAX {
                self.terminated = true;
                self.termination_reason = Some(TerminationReason::ReachedMax);
            }
            self.current_l = (l + 1).min(L_MAX);
        } else {
            let fails = self.fail_counts.entry(l).or_insert(0);
            *fails += 1;
            if *fails >= 2 {
                self.terminated = true;
                self.termination_reason = Some(TerminationReason::TwoFailsSameL);
            }
            self.current_l = l.saturating_sub(1).max(self.floor_l);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    /// 50% point in units of `L`, capped at the task maximum.
    pub psi_theta: f64,
    /// Logistic scale `s` in `p(L) = 1 / (1 + exp((L - theta) / s))`.
    pub slope: f64,
    pub capped: bool,
    /// The estimate lies below the smallest task `L`.
    pub below_range: bool,
}

/// Location of the phantom failure appended before fitting.
pub const PHANTOM_FAIL_L: f64 = 17.0;
const THETA_RANGE: (f64, f64) = (0.0, 18.0);
const SCALE_RANGE: (f64, f64) = (0.1, 8.0);

/// Negative log-likelihood of the decreasing logistic at `(theta, s)`.
pub fn logistic_nll(data: &[(f64, bool)], theta: f64, s: f64) -> f64 {
    data.iter()
        .map(|&(l, passed)| {
            let z = (theta - l) / s;
            // ln sigmoid(z) for a pass, ln sigmoid(-z) for a fail
            let x = if passed { z } else { -z };
            if x >= 0.0 {
                (-x).exp().ln_1p()
            } else {
                -x + x.exp().ln_1p()
            }
        })
        .sum()
}

/// Maximum-likelihood logistic threshold over the real trials of `log`,
/// with one failure appended at `L = 17`.
pub fn fit_logistic_threshold(log: &[TrialOutcome]) -> Result<ThresholdEstimate> {
    let mut data: Vec<(f64, bool)> = log
        .iter()
        .filter(|o| !o.phantom)
        .map(|o| (o.params.l() as f64, o.passed))
        .collect();
    if data.is_empty() {
        return Err(Error::InvalidInput("empty trial log".into()));
    }
    data.push((PHANTOM_FAIL_L, false));
    let (theta, s) = maximize_likelihood(&data);
    if !theta.is_finite() || !s.is_finite() {
        return Err(Error::NonFinite(format!("logistic fit diverged: theta {theta}, s {s}")));
    }
    let cap = L_MAX as f64;
    Ok(ThresholdEstimate {
        psi_theta: theta.min(cap),
        slope: s,
        capped: theta > cap,
        below_range: theta < L_MIN as f64,
    })
}

/// Multistart grid over the box, then a shrinking pattern search from the
/// best start. The scale is searched in log space.
fn maximize_likelihood(data: &[(f64, bool)]) -> (f64, f64) {
    let (lt, ht) = THETA_RANGE;
    let (ls, hs) = (SCALE_RANGE.0.ln(), SCALE_RANGE.1.ln());
    let nll = |t: f64, u: f64| logistic_nll(data, t, u.exp());
    let mut best = (f64::INFINITY, lt, ls);
    for i in 0..=72 {
        let t = lt + (ht - lt) * i as f64 / 72.0;
        for j in 0..=24 {
            let u = ls + (hs - ls) * j as f64 / 24.0;
            let v = nll(t, u);
            if v < best.0 {
                best = (v, t, u);
            }
        }
    }
    let (mut f, mut t, mut u) = best;
    let (mut dt, mut du) = ((ht - lt) / 72.0, (hs - ls) / 24.0);
    while dt > 1e-10 || du > 1e-10 {
        let mut moved = false;
        for (a, b) in [(dt, 0.0), (-dt, 0.0), (0.0, du), (0.0, -du), (dt, du), (-dt, -du), (dt, -du), (-dt, du)] {
            let (nt, nu) = ((t + a).clamp(lt, ht), (u + b).clamp(ls, hs));
            let v = nll(nt, nu);
            if v < f - 1e-15 {
                (f, t, u) = (v, nt, nu);
                moved = true;
                break;
            }
        }
        if !moved {
            dt *= 0.5;
            du *= 0.5;
        }
    }
    (t, u.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_at_k3(points: &[(u32, bool)]) -> Vec<TrialOutcome> {
        points
            .iter()
            .enumerate()
            .map(|(i, &(l, p))| TrialOutcome::trial(StimulusParams::nominal(l, 3).unwrap(), p, i as u32 + 1))
            .collect()
    }

    #[test]
    fn pass_increments_fail_decrements() {
        let s = StaircaseState::classic();
        assert_eq!(s.current_params(), StimulusParams::nominal(1, 3).unwrap());
        let s = s.step(true).unwrap();
        assert_eq!(s.current_l, 2);
        let s = s.step(false).unwrap();
        assert_eq!(s.current_l, 1);
        // clamped at the floor; a fail at L = 1 still counts
        let s = s.step(false).unwrap();
        assert_eq!(s.current_l, 1);
        assert_eq!(s.fail_counts[&1], 1);
    }

    #[test]
    fn two_fails_at_same_l_terminate() {
        let mut s = StaircaseState::classic();
        for _ in 0..3 {
            s.step_mut(true).unwrap();
        }
        assert_eq!(s.current_l, 4);
        s.step_mut(false).unwrap();
        s.step_mut(true).unwrap();
        assert!(!s.terminated);
        s.step_mut(false).unwrap();
        assert!(s.terminated);
        assert_eq!(s.termination_reason, Some(TerminationReason::TwoFailsSameL));
        assert!(matches!(s.step(true), Err(Error::State(_))));
    }

    #[test]
    fn pass_at_max_terminates() {
        let mut s = StaircaseState::new(3, 15).unwrap();
        s.step_mut(true).unwrap();
        assert!(!s.terminated);
        s.step_mut(true).unwrap();
        assert!(s.terminated);
        assert_eq!(s.termination_reason, Some(TerminationReason::ReachedMax));
        assert_eq!(s.current_l, 16);
    }

    #[test]
    fn floor_keeps_per_color_staircases_feasible() {
        let mut s = StaircaseState::new(5, 5).unwrap();
        s.step_mut(false).unwrap();
        assert_eq!(s.current_l, 5);
        assert!(s.current_params().is_feasible());
    }

    /// Independent maximum-likelihood oracle: a fine exhaustive grid.
    fn grid_oracle(data: &[(f64, bool)]) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=1800 {
            let t = i as f64 * 0.01;
            for j in 0..=200 {
                let s = 0.1 * (80f64).powf(j as f64 / 200.0);
                let v: f64 = data
                    .iter()
                    .map(|&(l, pass)| {
                        let p = 1.0 / (1.0 + ((l - t) / s).exp());
                        -(if pass { p } else { 1.0 - p }).max(1e-300).ln()
                    })
                    .sum();
                if v < best.0 {
                    best = (v, t, s);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn separable_data_threshold_between_last_pass_and_first_fail() {
        let log = log_at_k3(&[(1, true), (2, true), (3, true), (4, true), (5, false), (6, false)]);
        let est = fit_logistic_threshold(&log).unwrap();
        assert!(est.psi_theta > 4.0 && est.psi_theta < 5.0, "{est:?}");
        let mut data: Vec<(f64, bool)> = log.iter().map(|o| (o.params.l() as f64, o.passed)).collect();
        data.push((17.0, false));
        let (t, _) = grid_oracle(&data);
        assert!((est.psi_theta - t).abs() < 0.02, "{} vs oracle {t}", est.psi_theta);
    }

    #[test]
    fn noisy_data_matches_grid_oracle() {
        let log = log_at_k3(&[
            (1, true), (2, true), (3, true), (4, true), (5, true), (6, false), (5, true),
            (6, true), (7, false), (6, false), (5, true), (6, true), (7, true), (8, false), (7, false),
        ]);
        let est = fit_logistic_threshold(&log).unwrap();
        let mut data: Vec<(f64, bool)> = log.iter().map(|o| (o.params.l() as f64, o.passed)).collect();
        data.push((17.0, false));
        let (t, s) = grid_oracle(&data);
        assert!((est.psi_theta - t).abs() < 0.02, "{} vs {t}", est.psi_theta);
        assert!((est.slope - s).abs() / s < 0.05, "{} vs {s}", est.slope);
        // the fit is a local optimum of the likelihood
        let f = logistic_nll(&data, est.psi_theta, est.slope);
        assert!(f <= logistic_nll(&data, t, s) + 1e-9);
    }

    #[test]
    fn symmetric_data_centers_on_midpoint() {
        let log = log_at_k3(&[(3, true), (4, true), (6, false), (7, false), (4, true), (6, false)]);
        let est = fit_logistic_threshold(&log).unwrap();
        // the phantom at 17 is far in the flat tail of a steep fit
        assert!((est.psi_theta - 5.0).abs() < 1e-3, "{est:?}");
    }

    #[test]
    fn all_passes_cap_at_maximum() {
        let pts: Vec<(u32, bool)> = (1..=16).map(|l| (l, true)).collect();
        let est = fit_logistic_threshold(&log_at_k3(&pts)).unwrap();
        assert_eq!(est.psi_theta, 16.0);
        assert!(est.capped);
    }

    #[test]
    fn all_fails_flagged_below_range() {
        let est = fit_logistic_threshold(&log_at_k3(&[(1, false), (1, false)])).unwrap();
        assert!(est.below_range);
        assert!(est.psi_theta < 1.0);
    }

    #[test]
    fn empty_log_rejected() {
        assert!(fit_logistic_threshold(&[]).is_err());
    }
}
