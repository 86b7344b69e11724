//! Gaussian-process probabilistic classifier over scaled `(L, K)`.
//!
//! Observations are pooled into distinct sites with pass/fail counts. The
//! latent function at the sites carries a whitened Gaussian variational
//! posterior, trained jointly with the kernel and mean hyperparameters by
//! Adam on the negative evidence lower bound (see [`objective`]).

pub mod adam;
pub mod grid;
pub mod kernel;
pub mod objective;
pub mod quadrature;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::domain::{Bounds, TrialOutcome};
use crate::error::{Error, Result};

pub use adam::AdamConfig;
pub use grid::{binary_entropy, GridSpec, PosteriorGrid};
pub use kernel::GpHyperparameters;
pub use objective::{HyperPrior, Site};

use kernel::N_HYPER;
use objective::{pack_factor, packed_len, unpack_factor, VariationalProblem};
use quadrature::GaussHermite;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Starting hyperparameters for every full refit.
    pub initial_hyperparameters: GpHyperparameters,
    pub hyperprior: HyperPrior,
    pub learn_hyperparameters: bool,
    /// Optimizer settings for a refit from scratch.
    pub optimizer: AdamConfig,
    /// Optimizer settings for a warm-started online update.
    pub online_optimizer: AdamConfig,
    pub jitter: f64,
    /// Online result is rejected when its objective exceeds the warm-start
    /// objective by more than this fraction.
    pub max_degradation: f64,
    /// Smallest eigenvalue tolerated in the variational covariance.
    pub psd_tolerance: f64,
    pub quadrature_nodes: usize,
    pub bounds: Bounds,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            initial_hyperparameters: GpHyperparameters::default(),
            hyperprior: HyperPrior::default(),
            learn_hyperparameters: true,
            optimizer: AdamConfig::default(),
            online_optimizer: AdamConfig {
                lr_start: 0.02,
                lr_end: 0.002,
                max_iterations: 150,
                min_iterations: 10,
                ..AdamConfig::default()
            },
            jitter: 1e-6,
            max_degradation: 0.10,
            psd_tolerance: 1e-8,
            quadrature_nodes: 20,
            bounds: Bounds::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.initial_hyperparameters.validate()?;
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::Config("jitter must be finite and non-negative".into()));
        }
        if self.quadrature_nodes == 0 {
            return Err(Error::Config("quadrature needs at least one node".into()));
        }
        if self.optimizer.max_iterations == 0 {
            return Err(Error::Config("iteration cap must be positive".into()));
        }
        Ok(())
    }

    fn rule(&self) -> GaussHermite {
        if self.quadrature_nodes == 20 {
            GaussHermite::default_rule().clone()
        } else {
            GaussHermite::new(self.quadrature_nodes)
        }
    }
}

/// One observation in scaled coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub x: [f64; 2],
    pub passed: bool,
    pub phantom: bool,
}

/// `q(v) = N(mean, C C^T)`; `cov_factor` holds the lower triangle of `C`
/// row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams {
    pub mean: Vec<f64>,
    pub cov_factor: Vec<f64>,
}

impl VariationalParams {
    fn identity(n: usize) -> Self {
        let c = DMatrix::identity(n, n);
        Self::from_parts(&DVector::zeros(n), &c)
    }

    fn from_parts(m: &DVector<f64>, c: &DMatrix<f64>) -> Self {
        let n = m.len();
        let mut cov_factor = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                cov_factor.push(c[(i, j)]);
            }
        }
        Self {
            mean: m.as_slice().to_vec(),
            cov_factor,
        }
    }

    pub fn factor(&self) -> DMatrix<f64> {
        let n = self.mean.len();
        let mut c = DMatrix::zeros(n, n);
        let mut it = self.cov_factor.iter();
        for i in 0..n {
            for j in 0..=i {
                c[(i, j)] = *it.next().expect("factor length checked on construction");
            }
        }
        c
    }

    /// Smallest eigenvalue of `C C^T`.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.mean.is_empty() {
            return 0.0;
        }
        let c = self.factor();
        let s = &c * c.transpose();
        SymmetricEigen::new(s).eigenvalues.min()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Prior,
    FullFit,
    Online,
    /// An online update failed a stability check and was replaced by a refit.
    Fallback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub iterations: u32,
    pub converged: bool,
    pub update: UpdateKind,
    /// Number of stability fallbacks over the state's history.
    pub fallbacks: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModelState {
    pub hyperparameters: GpHyperparameters,
    pub training_points: Vec<TrainingPoint>,
    /// Distinct training locations in the order the variational
    /// parameters refer to.
    pub sites: Vec<Site>,
    pub variational_params: VariationalParams,
    pub fit_diagnostics: FitDiagnostics,
    pub bounds: Bounds,
}

fn to_training_point(outcome: &TrialOutcome, bounds: &Bounds) -> TrainingPoint {
    let (l, k) = outcome.params.as_f64();
    TrainingPoint {
        x: bounds.to_unit(l, k),
        passed: outcome.passed,
        phantom: outcome.phantom,
    }
}

fn check_point(p: &TrainingPoint) -> Result<()> {
    let inside = p.x.iter().all(|v| v.is_finite() && (-1e-12..=1.0 + 1e-12).contains(v));
    if inside {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "training coordinate {:?} is not finite or leaves [0, 1]^2",
            p.x
        )))
    }
}

/// Pools points into sites sorted by coordinate, so the result does not
/// depend on observation order.
fn pool_sites(points: &[TrainingPoint]) -> Vec<Site> {
    let mut sites: Vec<Site> = Vec::new();
    for p in points {
        match sites.iter_mut().find(|s| s.x == p.x) {
            Some(s) => add_label(s, p.passed),
            None => {
                let mut s = Site { x: p.x, passes: 0, fails: 0 };
                add_label(&mut s, p.passed);
                sites.push(s);
            }
        }
    }
    sites.sort_by(|a, b| a.x[0].total_cmp(&b.x[0]).then(a.x[1].total_cmp(&b.x[1])));
    sites
}

fn add_label(site: &mut Site, passed: bool) {
    if passed {
        site.passes += 1;
    } else {
        site.fails += 1;
    }
}

fn pack(hyp: &GpHyperparameters, vp: &VariationalParams) -> Vec<f64> {
    let mut params = Vec::with_capacity(packed_len(vp.mean.len()));
    params.extend_from_slice(&hyp.pack());
    params.extend_from_slice(&vp.mean);
    params.extend(pack_factor(&vp.factor()));
    params
}

fn unpack(params: &[f64], n: usize) -> (GpHyperparameters, VariationalParams) {
    let hyp = GpHyperparameters::unpack(&params[..N_HYPER]);
    let m = DVector::from_column_slice(&params[N_HYPER..N_HYPER + n]);
    let c = unpack_factor(&params[N_HYPER + n..], n);
    (hyp, VariationalParams::from_parts(&m, &c))
}

struct Optimized {
    hyperparameters: GpHyperparameters,
    variational: VariationalParams,
    objective: f64,
    initial_objective: f64,
    iterations: u32,
    converged: bool,
}

fn optimize(
    sites: &[Site],
    hyp: &GpHyperparameters,
    vp: &VariationalParams,
    config: &FitConfig,
    adam_cfg: &AdamConfig,
) -> Option<Optimized> {
    let rule = config.rule();
    let problem = VariationalProblem {
        sites,
        prior: &config.hyperprior,
        learn_hyperparameters: config.learn_hyperparameters,
        jitter: config.jitter,
        rule: &rule,
    };
    let result = adam::minimize(
        |x| problem.evaluate(x).map(|e| (e.objective, e.gradient)),
        pack(hyp, vp),
        adam_cfg,
    )?;
    let (hyperparameters, variational) = unpack(&result.params, sites.len());
    Some(Optimized {
        hyperparameters,
        variational,
        objective: result.objective,
        initial_objective: result.initial_objective,
        iterations: result.iterations,
        converged: result.converged,
    })
}

impl GpModelState {
    /// A model with no data; every prediction is the prior.
    pub fn prior(config: &FitConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            hyperparameters: config.initial_hyperparameters,
            training_points: Vec::new(),
            sites: Vec::new(),
            variational_params: VariationalParams::identity(0),
            fit_diagnostics: FitDiagnostics {
                objective: 0.0,
                iterations: 0,
                converged: true,
                update: UpdateKind::Prior,
                fallbacks: 0,
            },
            bounds: config.bounds,
        })
    }

    pub fn n_observations(&self) -> usize {
        self.training_points.len()
    }

    /// Latent mean and variance at scaled points.
    pub fn latent(&self, xs: &[[f64; 2]], jitter: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let hyp = &self.hyperparameters;
        let prior_mean: Vec<f64> = xs.iter().map(|x| hyp.mean(x)).collect();
        let prior_var: Vec<f64> = xs.iter().map(|x| hyp.prior_variance(x)).collect();
        if self.sites.is_empty() {
            return Ok((prior_mean, prior_var));
        }
        let train: Vec<[f64; 2]> = self.sites.iter().map(|s| s.x).collect();
        let lk = hyp
            .gram(&train, jitter)
            .cholesky()
            .ok_or_else(|| Error::NonFinite("training covariance is not positive definite".into()))?
            .unpack();
        let cross = hyp.cross(&train, xs);
        let a = lk
            .solve_lower_triangular(&cross)
            .ok_or_else(|| Error::NonFinite("singular covariance factor".into()))?;
        let m = DVector::from_column_slice(&self.variational_params.mean);
        let c = self.variational_params.factor();
        let ca = c.tr_mul(&a);
        let mut means = Vec::with_capacity(xs.len());
        let mut vars = Vec::with_capacity(xs.len());
        for j in 0..xs.len() {
            let col = a.column(j);
            means.push(prior_mean[j] + col.dot(&m));
            let v = prior_var[j] - col.norm_squared() + ca.column(j).norm_squared();
            vars.push(v.max(0.0));
        }
        Ok((means, vars))
    }

    /// Predictive success probability `E_q[sigmoid(f)]` at native points.
    pub fn predict_points(&self, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        let xs: Vec<[f64; 2]> = points.iter().map(|&(l, k)| self.bounds.to_unit(l, k)).collect();
        let (means, vars) = self.latent(&xs, 1e-6)?;
        let rule = GaussHermite::default_rule();
        let p: Vec<f64> = means
            .iter()
            .zip(&vars)
            .map(|(&m, &v)| rule.expected_sigmoid(m, v).clamp(0.0, 1.0))
            .collect();
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predictive probability".into()));
        }
        Ok(p)
    }

    pub fn predict_point(&self, l: f64, k: f64) -> Result<f64> {
        Ok(self.predict_points(&[(l, k)])?[0])
    }

    pub fn predict_grid(&self, spec: &GridSpec) -> Result<PosteriorGrid> {
        spec.validate()?;
        let p = self.predict_points(&spec.points())?;
        PosteriorGrid::from_probabilities(spec, p)
    }
}

/// Trains a model from scratch on every outcome (real and phantom).
pub fn fit(outcomes: &[TrialOutcome], config: &FitConfig) -> Result<GpModelState> {
    if outcomes.is_empty() {
        return Err(Error::InvalidInput("fit needs at least one outcome".into()));
    }
    config.validate()?;
    let points: Vec<TrainingPoint> = outcomes
        .iter()
        .map(|o| to_training_point(o, &config.bounds))
        .collect();
    fit_points(points, config, UpdateKind::FullFit, 0)
}

fn fit_points(
    points: Vec<TrainingPoint>,
    config: &FitConfig,
    update: UpdateKind,
    fallbacks: u32,
) -> Result<GpModelState> {
    for p in &points {
        check_point(p)?;
    }
    let sites = pool_sites(&points);
    let start = VariationalParams::identity(sites.len());
    let opt = optimize(
        &sites,
        &config.initial_hyperparameters,
        &start,
        config,
        &config.optimizer,
    )
    .ok_or_else(|| Error::NonFinite("variational objective undefined at the start point".into()))?;
    if !opt.converged {
        tracing::debug!(iterations = opt.iterations, "refit stopped at the iteration cap");
    }
    Ok(GpModelState {
        hyperparameters: opt.hyperparameters,
        training_points: points,
        sites,
        variational_params: opt.variational,
        fit_diagnostics: FitDiagnostics {
            objective: opt.objective,
            iterations: opt.iterations,
            converged: opt.converged,
            update,
            fallbacks,
        },
        bounds: config.bounds,
    })
}

/// Adds one outcome by warm-starting the optimizer from `state`. Falls back
/// to a full refit when the online result fails a stability check.
pub fn update_online(
    state: &GpModelState,
    outcome: &TrialOutcome,
    config: &FitConfig,
) -> Result<GpModelState> {
    update_online_point(state, to_training_point(outcome, &state.bounds), config)
}

/// As [`update_online`] with an explicit scaled point, validated before any
/// optimization.
pub fn update_online_point(
    state: &GpModelState,
    point: TrainingPoint,
    config: &FitConfig,
) -> Result<GpModelState> {
    check_point(&point)?;
    config.validate()?;
    let mut points = state.training_points.clone();
    points.push(point);

    // Extend the whitened posterior: an existing site keeps its parameters,
    // a new one starts at its prior conditional (v = 0, unit variance).
    let mut sites = state.sites.clone();
    let n_old = sites.len();
    let (m, c) = match sites.iter_mut().position(|s| s.x == point.x) {
        Some(i) => {
            add_label(&mut sites[i], point.passed);
            (
                DVector::from_column_slice(&state.variational_params.mean),
                state.variational_params.factor(),
            )
        }
        None => {
            let mut s = Site { x: point.x, passes: 0, fails: 0 };
            add_label(&mut s, point.passed);
            sites.push(s);
            let mut m = DVector::zeros(n_old + 1);
            m.rows_mut(0, n_old)
                .copy_from_slice(&state.variational_params.mean);
            let mut c = DMatrix::zeros(n_old + 1, n_old + 1);
            c.view_mut((0, 0), (n_old, n_old))
                .copy_from(&state.variational_params.factor());
            c[(n_old, n_old)] = 1.0;
            (m, c)
        }
    };
    let warm = VariationalParams::from_parts(&m, &c);
    let fallbacks = state.fit_diagnostics.fallbacks;

    let online = optimize(
        &sites,
        &state.hyperparameters,
        &warm,
        config,
        &config.online_optimizer,
    );
    let stable = online.as_ref().is_some_and(|o| {
        o.objective.is_finite()
            && o.objective <= o.initial_objective + config.max_degradation * o.initial_objective.abs()
            && o.variational.min_eigenvalue() >= -config.psd_tolerance
    });
    match online {
        Some(o) if stable => Ok(GpModelState {
            hyperparameters: o.hyperparameters,
            training_points: points,
            sites,
            variational_params: o.variational,
            fit_diagnostics: FitDiagnostics {
                objective: o.objective,
                iterations: o.iterations,
                converged: o.converged,
                update: UpdateKind::Online,
                fallbacks,
            },
            bounds: state.bounds,
        }),
        _ => {
            tracing::debug!("online update unstable, refitting from scratch");
            fit_points(points, config, UpdateKind::Fallback, fallbacks + 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StimulusParams;

    fn outcome(l: u32, k: u32, passed: bool, index: u32) -> TrialOutcome {
        TrialOutcome::trial(StimulusParams::new(l, k).unwrap(), passed, index)
    }

    #[test]
    fn prior_model_predicts_one_half_everywhere() {
        let state = GpModelState::prior(&FitConfig::default()).unwrap();
        let grid = state.predict_grid(&GridSpec::default()).unwrap();
        assert_eq!(grid.p_success.len(), 121 * 61);
        assert!(grid.p_success.iter().all(|&p| (p - 0.5).abs() < 1e-15));
        assert!(grid.entropy.iter().all(|&h| (h - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_pass_moves_posterior_up() {
        let state = fit(&[outcome(1, 1, true, 1)], &FitConfig::default()).unwrap();
        assert!(state.predict_point(1.0, 1.0).unwrap() > 0.5);
    }

    #[test]
    fn empty_fit_is_rejected() {
        assert!(fit(&[], &FitConfig::default()).is_err());
    }

    #[test]
    fn degenerate_labels_still_fit() {
        let all_pass: Vec<_> = (1..=6).map(|l| outcome(l + 2, 3, true, l)).collect();
        let all_fail: Vec<_> = (1..=6).map(|l| outcome(l + 2, 3, false, l)).collect();
        for data in [all_pass, all_fail] {
            let s = fit(&data, &FitConfig::default()).unwrap();
            let g = s.predict_grid(&GridSpec::dense(16, 8)).unwrap();
            assert!(g.p_success.iter().all(|p| p.is_finite()));
        }
    }

    #[test]
    fn non_finite_point_rejected_before_optimizing() {
        let state = GpModelState::prior(&FitConfig::default()).unwrap();
        let bad = TrainingPoint { x: [f64::NAN, 0.2], passed: true, phantom: false };
        assert!(matches!(
            update_online_point(&state, bad, &FitConfig::default()),
            Err(Error::InvalidInput(_))
        ));
        let outside = TrainingPoint { x: [1.5, 0.2], passed: true, phantom: false };
        assert!(update_online_point(&state, outside, &FitConfig::default()).is_err());
    }

    #[test]
    fn batch_fit_ignores_observation_order() {
        let data = vec![
            outcome(1, 1, true, 1),
            outcome(3, 3, true, 2),
            outcome(5, 3, true, 3),
            outcome(7, 2, false, 4),
            outcome(5, 3, false, 5),
        ];
        let mut reversed = data.clone();
        reversed.reverse();
        let spec = GridSpec::dense(31, 15);
        let a = fit(&data, &FitConfig::default()).unwrap().predict_grid(&spec).unwrap();
        let b = fit(&reversed, &FitConfig::default()).unwrap().predict_grid(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn state_round_trips_through_json() {
        let data = vec![outcome(1, 1, true, 1), outcome(3, 3, false, 2)];
        let state = fit(&data, &FitConfig::default()).unwrap();
        let json = serde_json::to_string(&state).unwrap();
        let back: GpModelState = serde_json::from_str(&json).unwrap();
        let spec = GridSpec::dense(16, 8);
        assert_eq!(
            state.predict_grid(&spec).unwrap(),
            back.predict_grid(&spec).unwrap()
        );
    }

    #[test]
    fn online_update_records_kind() {
        let cfg = FitConfig::default();
        let s0 = fit(&[outcome(1, 1, true, 1)], &cfg).unwrap();
        let s1 = update_online(&s0, &outcome(3, 3, true, 2), &cfg).unwrap();
        assert_eq!(s1.sites.len(), 2);
        assert_eq!(s1.n_observations(), 2);
        assert!(matches!(
            s1.fit_diagnostics.update,
            UpdateKind::Online | UpdateKind::Fallback
        ));
        let s2 = update_online(&s1, &outcome(3, 3, false, 3), &cfg).unwrap();
        assert_eq!(s2.sites.len(), 2);
        assert!(s2.variational_params.min_eigenvalue() >= -1e-8);
    }
}
