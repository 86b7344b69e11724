//! Seeded synthetic cohorts and aggregate error curves.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::participant::{make_virtual_participant_with, GeneratorConfig, VirtualParticipant};
use super::policy::{run_policy, Policy, PolicyRun, SimConfig};
use crate::domain::{K_MIN, L_MAX, L_MIN};
use crate::error::{Error, Result};
use crate::isocontour::{CurveSource, ThresholdCurve, N_K};
use crate::stats::{paired_t, TTestResult};

/// Ranges the synthetic generators are drawn from. Thresholds follow
/// `psi(K) = psi3 + slope (K - 3) + curvature (K - 3)^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub n: usize,
    pub seed: u64,
    pub psi_at_3: (f64, f64),
    pub slope: (f64, f64),
    pub curvature: (f64, f64),
    pub spread: (f64, f64),
    pub guess: (f64, f64),
    pub lapse: (f64, f64),
    pub generator: GeneratorConfig,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n: 33,
            seed: 2024,
            psi_at_3: (5.0, 10.5),
            slope: (-1.4, -0.4),
            curvature: (-0.06, 0.06),
            spread: (0.6, 1.4),
            guess: (0.0, 0.05),
            lapse: (0.0, 0.05),
            generator: GeneratorConfig::default(),
        }
    }
}

fn draw<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Source threshold curve for a synthetic session; values off the task
/// range are absent.
pub fn synthetic_curve(psi3: f64, slope: f64, curvature: f64) -> ThresholdCurve {
    let mut psi = [None; N_K];
    for (i, v) in psi.iter_mut().enumerate() {
        let d = (K_MIN + i as u32) as f64 - 3.0;
        let value = psi3 + slope * d + curvature * d * d;
        if (L_MIN as f64..=L_MAX as f64).contains(&value) {
            *v = Some(value);
        }
    }
    ThresholdCurve::new(psi, CurveSource::AdaptivePosterior)
}

pub fn synthetic_cohort(config: &CohortConfig) -> Result<Vec<VirtualParticipant>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.n);
    while out.len() < config.n {
        let curve = synthetic_curve(
            draw(&mut rng, config.psi_at_3),
            draw(&mut rng, config.slope),
            draw(&mut rng, config.curvature),
        );
        let base = draw(&mut rng, config.spread);
        let mut spreads = [0.0; N_K];
        for s in &mut spreads {
            *s = base * draw(&mut rng, (0.85, 1.15));
        }
        let guess = draw(&mut rng, config.guess);
        let lapse = draw(&mut rng, config.lapse);
        let seed = rng.random::<u64>();
        if curve.present().len() < 2 {
            continue;
        }
        out.push(make_virtual_participant_with(&curve, spreads, guess, lapse, seed, &config.generator)?);
    }
    Ok(out)
}

/// Maps `f` over `items` on all available cores, keeping order.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<U>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let v = f(&items[i]);
                slots.lock().expect("no poisoned workers")[i] = Some(v);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|v| v.expect("every slot filled"))
        .collect()
}

/// Every participant under every policy, participant-major.
pub fn run_cohort(
    participants: &[VirtualParticipant],
    policies: &[Policy],
    budget: usize,
    config: &SimConfig,
) -> Result<Vec<PolicyRun>> {
    let jobs: Vec<(usize, Policy)> = (0..participants.len())
        .flat_map(|i| policies.iter().map(move |&p| (i, p)))
        .collect();
    par_map(&jobs, |&(i, p)| run_policy(&participants[i], p, budget, config))
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: Policy,
    /// Entry `t - 1` summarizes the error after `t` samples.
    pub mean_by_step: Vec<f64>,
    pub sd_by_step: Vec<f64>,
    pub n_by_step: Vec<usize>,
}

/// Mean and SD of the error per policy and step, over runs where it is
/// defined.
pub fn summarize(runs: &[PolicyRun]) -> Vec<PolicySummary> {
    let mut policies: Vec<Policy> = runs.iter().map(|r| r.policy).collect();
    policies.sort();
    policies.dedup();
    policies
        .into_iter()
        .map(|policy| {
            let these: Vec<&PolicyRun> = runs.iter().filter(|r| r.policy == policy).collect();
            let steps = these.iter().map(|r| r.rmse_by_step.len()).max().unwrap_or(0);
            let mut s = PolicySummary { policy, mean_by_step: vec![], sd_by_step: vec![], n_by_step: vec![] };
            for t in 1..=steps {
                let v: Vec<f64> = these.iter().filter_map(|r| r.rmse_at(t)).collect();
                s.n_by_step.push(v.len());
                s.mean_by_step.push(if v.is_empty() { f64::NAN } else { crate::stats::mean(&v) });
                s.sd_by_step.push(if v.len() < 2 { f64::NAN } else { crate::stats::sd(&v) });
            }
            s
        })
        .collect()
}

pub fn mean_rmse_at(runs: &[PolicyRun], policy: Policy, t: usize) -> f64 {
    let v: Vec<f64> = runs.iter().filter(|r| r.policy == policy).filter_map(|r| r.rmse_at(t)).collect();
    crate::stats::mean(&v)
}

/// Paired t test of `rmse(b) - rmse(a)` at step `t`, matched by
/// participant seed.
pub fn paired_difference(runs: &[PolicyRun], a: Policy, b: Policy, t: usize) -> Result<TTestResult> {
    let mut diffs = Vec::new();
    for ra in runs.iter().filter(|r| r.policy == a) {
        let rb = runs
            .iter()
            .find(|r| r.policy == b && r.participant_seed == ra.participant_seed)
            .ok_or_else(|| Error::InvalidInput(format!("no {} run for seed {}", b.name(), ra.participant_seed)))?;
        if let (Some(x), Some(y)) = (ra.rmse_at(t), rb.rmse_at(t)) {
            diffs.push(y - x);
        }
    }
    paired_t(&diffs)
}
