//! Offline commands: cohort simulation, refits of archived sessions and
//! statistics over CSV columns.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use wmsurface_core::domain::SessionRecord;
use wmsurface_core::gp::{self, FitConfig, GpHyperparameters, GridSpec};
use wmsurface_core::isocontour::{extract_isocontour, isocontour_slope, standardize_posterior, StandardizationConfig};
use wmsurface_core::sim::{
    paired_difference, run_cohort, summarize, synthetic_cohort, CohortConfig, Policy, PolicyRun, SimConfig,
};
use wmsurface_core::stats::{
    icc_2_1, iqr_fence_outliers, pearson_with_bf, paired_t, AgreementResult, CorrelationResult, TTestResult,
};
use wmsurface_core::{FeasibilityConstraints, ThresholdCurve};

pub struct SimulateArgs {
    pub cohort: usize,
    pub seed: u64,
    pub budget: usize,
    pub policies: Vec<Policy>,
    /// Step at which policies are compared pairwise.
    pub compare_at: usize,
    pub out_dir: PathBuf,
    pub sim: SimConfig,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub a: &'static str,
    pub b: &'static str,
    pub step: usize,
    /// Summary of `rmse(b) - rmse(a)` over participants.
    pub difference: TTestResult,
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub cohort: usize,
    pub budget: usize,
    pub mean_rmse_at_compare: Vec<(&'static str, f64)>,
    pub comparisons: Vec<Comparison>,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct BandEntry<'a> {
    policy: &'static str,
    participant: usize,
    seed: u64,
    samples: usize,
    truth: &'a ThresholdCurve,
    estimate: Option<&'a ThresholdCurve>,
    band_lo: Option<&'a ThresholdCurve>,
    band_hi: Option<&'a ThresholdCurve>,
}

/// Runs the cohort and writes `steps.csv` (one row per run and step),
/// `aggregate.csv` (mean and SD per policy and step) and `bands.json`
/// (truth, estimate and credible band of each run at the budget).
pub fn simulate(args: &SimulateArgs) -> Result<SimulateReport> {
    if args.policies.is_empty() {
        bail!("no policies selected");
    }
    let cohort = synthetic_cohort(&CohortConfig { n: args.cohort, seed: args.seed, ..CohortConfig::default() })?;
    tracing::info!(participants = cohort.len(), budget = args.budget, "running cohort");
    let runs = run_cohort(&cohort, &args.policies, args.budget, &args.sim)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;

    let n_policies = args.policies.len();
    let steps_path = args.out_dir.join("steps.csv");
    let mut w = csv::Writer::from_path(&steps_path)?;
    w.write_record(["policy", "participant", "seed", "step", "rmse"])?;
    for (i, run) in runs.iter().enumerate() {
        for (t, r) in run.rmse_by_step.iter().enumerate() {
            w.write_record([
                run.policy.name().to_string(),
                (i / n_policies).to_string(),
                run.participant_seed.to_string(),
                (t + 1).to_string(),
                r.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;

    let agg_path = args.out_dir.join("aggregate.csv");
    let mut w = csv::Writer::from_path(&agg_path)?;
    w.write_record(["policy", "step", "mean_rmse", "sd_rmse", "n"])?;
    for s in summarize(&runs) {
        for t in 0..s.mean_by_step.len() {
            w.write_record([
                s.policy.name().to_string(),
                (t + 1).to_string(),
                s.mean_by_step[t].to_string(),
                s.sd_by_step[t].to_string(),
                s.n_by_step[t].to_string(),
            ])?;
        }
    }
    w.flush()?;

    let bands: Vec<BandEntry> = runs
        .iter()
        .enumerate()
        .map(|(i, run)| BandEntry {
            policy: run.policy.name(),
            participant: i / n_policies,
            seed: run.participant_seed,
            samples: run.samples.len(),
            truth: &run.truth,
            estimate: run.estimates.last(),
            band_lo: run.band_lo.last(),
            band_hi: run.band_hi.last(),
        })
        .collect();
    let bands_path = args.out_dir.join("bands.json");
    fs::write(&bands_path, serde_json::to_vec_pretty(&bands)?)?;

    let step = args.compare_at.min(args.budget);
    Ok(SimulateReport {
        cohort: cohort.len(),
        budget: args.budget,
        mean_rmse_at_compare: args
            .policies
            .iter()
            .map(|&p| (p.name(), wmsurface_core::sim::mean_rmse_at(&runs, p, step)))
            .collect(),
        comparisons: comparisons(&runs, &args.policies, step)?,
        files: vec![steps_path, agg_path, bands_path],
    })
}

fn comparisons(runs: &[PolicyRun], policies: &[Policy], step: usize) -> Result<Vec<Comparison>> {
    let mut out = Vec::new();
    for (i, &a) in policies.iter().enumerate() {
        for &b in &policies[i + 1..] {
            match paired_difference(runs, a, b, step) {
                Ok(difference) => out.push(Comparison { a: a.name(), b: b.name(), step, difference }),
                Err(e) => tracing::warn!(a = a.name(), b = b.name(), "comparison skipped: {e}"),
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub session_id: String,
    pub n_trials: usize,
    pub hyperparameters: GpHyperparameters,
    /// Refit on every archived outcome, phantoms included.
    pub curve: ThresholdCurve,
    /// Refit with the standardization phantoms.
    pub standardized_curve: ThresholdCurve,
    /// Least-squares slope of the standardized threshold against `K`.
    pub standardized_slope: Option<f64>,
}

/// Refits an archived adaptive session from its recorded outcomes.
pub fn fit_archive(path: &Path, fit: &FitConfig) -> Result<FitReport> {
    let record: SessionRecord = wmsurface_core::service::read_record(path)?;
    let slices = GridSpec::threshold_slices();
    let state = gp::fit(&record.outcomes, fit)?;
    let curve = extract_isocontour(&state.predict_grid(&slices)?);
    let std_state = standardize_posterior(&record.outcomes, &record.constraints, &StandardizationConfig::default(), fit)?;
    let standardized_curve = extract_isocontour(&std_state.predict_grid(&slices)?);
    Ok(FitReport {
        session_id: record.session_id,
        n_trials: record.outcomes.iter().filter(|o| !o.phantom).count(),
        hyperparameters: state.hyperparameters,
        standardized_slope: isocontour_slope(&standardized_curve),
        curve,
        standardized_curve,
    })
}

/// Reads numeric columns by header name; blank cells are dropped pairwise.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| headers.iter().position(|h| h.trim() == *n).with_context(|| format!("no column {n:?}")))
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cells: Vec<&str> = idx.iter().map(|&i| rec.get(i).unwrap_or("").trim()).collect();
        if cells.iter().any(|c| c.is_empty()) {
            continue;
        }
        for (col, cell) in cols.iter_mut().zip(&cells) {
            col.push(cell.parse().with_context(|| format!("row {}: {cell:?} is not a number", line + 2))?);
        }
    }
    Ok(cols)
}

#[derive(Debug, Serialize)]
#[serde(tag = "statistic", rename_all = "snake_case")]
pub enum StatResult {
    Icc(AgreementResult),
    Pearson(CorrelationResult),
    PairedT(TTestResult),
    Outliers { indices: Vec<usize>, values: Vec<f64> },
}

pub fn icc_columns(path: &Path, a: &str, b: &str) -> Result<StatResult> {
    let cols = read_columns(path, &[a, b])?;
    let pairs: Vec<(f64, f64)> = cols[0].iter().copied().zip(cols[1].iter().copied()).collect();
    Ok(StatResult::Icc(icc_2_1(&pairs)?))
}

pub fn pearson_columns(path: &Path, x: &str, y: &str) -> Result<StatResult> {
    let cols = read_columns(path, &[x, y])?;
    Ok(StatResult::Pearson(pearson_with_bf(&cols[0], &cols[1])?))
}

/// Paired t on `a - b`.
pub fn paired_t_columns(path: &Path, a: &str, b: &str) -> Result<StatResult> {
    let cols = read_columns(path, &[a, b])?;
    let d: Vec<f64> = cols[0].iter().zip(&cols[1]).map(|(x, y)| x - y).collect();
    Ok(StatResult::PairedT(paired_t(&d)?))
}

/// IQR-fence outliers of one column, or of `a - b` when `b` is given.
pub fn outlier_columns(path: &Path, a: &str, b: Option<&str>, k: f64) -> Result<StatResult> {
    let values = match b {
        Some(b) => {
            let cols = read_columns(path, &[a, b])?;
            cols[0].iter().zip(&cols[1]).map(|(x, y)| x - y).collect()
        }
        None => read_columns(path, &[a])?.remove(0),
    };
    let indices: Vec<usize> = iqr_fence_outliers(&values, k)?.into_iter().collect();
    let flagged = indices.iter().map(|&i| values[i]).collect();
    Ok(StatResult::Outliers { indices, values: flagged })
}

/// Parses `staircase,halton,active`.
pub fn parse_policies(s: &str) -> Result<Vec<Policy>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let p: Policy = part.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Loads a JSON constraints file, or the default task region.
pub fn load_constraints(path: Option<&Path>) -> Result<FeasibilityConstraints> {
    let Some(path) = path else {
        return Ok(FeasibilityConstraints::default());
    };
    let c: FeasibilityConstraints = serde_json::from_slice(&fs::read(path)?)?;
    c.validate()?;
    Ok(c)
}
