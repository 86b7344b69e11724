//! Session service: creates adaptive and classic sessions, takes outcomes in
//! native units, returns recommendations and persists every step.

pub mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::SystemTime;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

pub use store::{read_record, SessionStore, StoreEvent};

use crate::acquisition::AdaptiveRun;
use crate::domain::{
    FeasibilityConstraints, Mode, PhantomKind, SessionRecord, StimulusParams, TrialOutcome, K_MAX, K_MIN, L_MAX,
    L_MIN,
};
use crate::error::{Error, Result};
use crate::gp::{FitConfig, GpHyperparameters, GpModelState, GridSpec, PosteriorGrid};
use crate::isocontour::{extract_isocontour, standardize_posterior, StandardizationConfig, ThresholdCurve};
use crate::staircase::{fit_logistic_threshold, StaircaseState, TerminationReason, ThresholdEstimate};

pub const DEFAULT_AM_BUDGET: u32 = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// Directory for event logs and archives; `None` keeps sessions in
    /// memory only.
    pub store_dir: Option<PathBuf>,
    pub fit: FitConfig,
    /// Grid searched for proposals and returned by posterior queries.
    pub grid: GridSpec,
    pub am_budget: u32,
    pub standardization: StandardizationConfig,
    pub default_constraints: FeasibilityConstraints,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            store_dir: None,
            fit: FitConfig::default(),
            grid: GridSpec::default(),
            am_budget: DEFAULT_AM_BUDGET,
            standardization: StandardizationConfig::default(),
            default_constraints: FeasibilityConstraints::default(),
        }
    }
}

/// A phantom observation supplied at creation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomInput {
    #[serde(flatten)]
    pub params: StimulusParams,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub mode: Mode,
    #[serde(default)]
    pub constraints: Option<FeasibilityConstraints>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub phantoms: Vec<PhantomInput>,
    /// Repeating a create with the same token returns the same session.
    #[serde(default)]
    pub client_token: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub mode: Mode,
    pub constraints: FeasibilityConstraints,
    pub created_at: String,
    pub status: SessionStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub params: StimulusParams,
    /// 1-based index of the trial this recommendation is for.
    pub trial: u32,
    /// Seed for the stimulus pattern of this trial.
    pub pattern_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Termination {
    Adaptive {
        curve: ThresholdCurve,
        psi_at_classic_k: Option<f64>,
    },
    Classic {
        estimate: ThresholdEstimate,
        reason: TerminationReason,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session: SessionHandle,
    pub next: Option<Recommendation>,
    pub n_trials: u32,
    pub termination: Option<Termination>,
}

/// A reported outcome in native units; coordinates must be integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRequest {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub passed: bool,
    #[serde(default)]
    pub token: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeResponse {
    pub outcome: TrialOutcome,
    /// The reported point differed from the pending recommendation.
    pub mismatch: bool,
    pub n_trials: u32,
    pub next: Option<Recommendation>,
    pub termination: Option<Termination>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorView {
    pub session_id: String,
    pub n_trials: u32,
    /// Closed sessions report the standardized refit.
    pub standardized: bool,
    pub grid: PosteriorGrid,
    pub curve: ThresholdCurve,
    pub hyperparameters: GpHyperparameters,
}

pub fn pattern_seed(session_seed: u64, trial: u32) -> u64 {
    session_seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Integer native coordinates from a report; fractional or non-finite
/// values are rejected.
pub fn parse_native(l: f64, k: f64) -> Result<StimulusParams> {
    let ok = |v: f64, lo: u32, hi: u32| v.is_finite() && v.fract() == 0.0 && v >= lo as f64 && v <= hi as f64;
    if !ok(l, L_MIN, L_MAX) || !ok(k, K_MIN, K_MAX) {
        return Err(Error::InvalidInput(format!(
            "(L={l}, K={k}) must be integers with L in {L_MIN}..={L_MAX}, K in {K_MIN}..={K_MAX}"
        )));
    }
    StimulusParams::nominal(l as u32, k as u32)
}

enum Engine {
    Adaptive(Box<AdaptiveRun>),
    Classic(StaircaseState),
}

struct Session {
    handle: SessionHandle,
    seed: u64,
    engine: Engine,
    outcomes: Vec<TrialOutcome>,
    recommendations: Vec<StimulusParams>,
    pending: Option<StimulusParams>,
    termination: Option<Termination>,
    standardized: Option<GpModelState>,
    outcome_tokens: HashMap<String, OutcomeResponse>,
    client_token: Option<String>,
}

struct SessionSlot {
    session: Mutex<Session>,
    /// Posterior as of the last completed update, readable while an update
    /// holds the session lock.
    snapshot: RwLock<Option<Arc<PosteriorView>>>,
}

pub struct SessionService {
    config: ServiceConfig,
    store: Option<SessionStore>,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    create_tokens: Mutex<HashMap<String, String>>,
}

fn now_rfc3339() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

impl Session {
    fn n_trials(&self) -> u32 {
        self.outcomes.iter().filter(|o| !o.phantom).count() as u32
    }

    fn recommendation(&self) -> Option<Recommendation> {
        self.pending.map(|params| {
            let trial = self.n_trials() + 1;
            Recommendation { params, trial, pattern_seed: pattern_seed(self.seed, trial) }
        })
    }

    fn response(&self) -> SessionResponse {
        SessionResponse {
            session: self.handle.clone(),
            next: self.recommendation(),
            n_trials: self.n_trials(),
            termination: self.termination.clone(),
        }
    }

    fn posterior_view(&mut self, grid_spec: &GridSpec) -> Result<Option<PosteriorView>> {
        let n_trials = self.n_trials();
        let id = self.handle.session_id.clone();
        let view = match (&mut self.engine, &self.standardized) {
            (Engine::Classic(_), _) => return Ok(None),
            (Engine::Adaptive(_), Some(state)) => PosteriorView {
                session_id: id,
                n_trials,
                standardized: true,
                grid: state.predict_grid(grid_spec)?,
                curve: extract_isocontour(&state.predict_grid(&GridSpec::threshold_slices())?),
                hyperparameters: state.hyperparameters.clone(),
            },
            (Engine::Adaptive(run), None) => PosteriorView {
                session_id: id,
                n_trials,
                standardized: false,
                grid: run.posterior_grid()?.clone(),
                curve: run.level_curve(0.5)?,
                hyperparameters: run.state().hyperparameters.clone(),
            },
        };
        Ok(Some(view))
    }
}

impl SessionService {
    pub fn new(config: ServiceConfig) -> Result<Self> {
        config.fit.validate()?;
        config.grid.validate()?;
        config.default_constraints.validate()?;
        if config.am_budget < 2 {
            return Err(Error::Config("adaptive budget must cover the two primers".into()));
        }
        let store = config.store_dir.as_ref().map(SessionStore::open).transpose()?;
        Ok(Self {
            config,
            store,
            sessions: RwLock::new(HashMap::new()),
            create_tokens: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> Option<&SessionStore> {
        self.store.as_ref()
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("no session {id}")))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn create_session(&self, req: CreateSessionRequest) -> Result<SessionResponse> {
        self.create_with_id(req, uuid::Uuid::new_v4().simple().to_string(), now_rfc3339(), true)
    }

    fn create_with_id(
        &self,
        req: CreateSessionRequest,
        session_id: String,
        created_at: String,
        persist: bool,
    ) -> Result<SessionResponse> {
        // the token map stays locked so concurrent retries create one session
        let mut tokens = self.create_tokens.lock();
        if let Some(token) = &req.client_token {
            if let Some(id) = tokens.get(token) {
                return Ok(self.slot(id)?.session.lock().response());
            }
        }
        let constraints = req.constraints.clone().unwrap_or_else(|| self.config.default_constraints.clone());
        constraints.validate()?;
        let phantoms: Vec<TrialOutcome> = req
            .phantoms
            .iter()
            .map(|p| TrialOutcome::phantom(p.params, p.passed, PhantomKind::Primer))
            .collect();
        let (engine, first) = match req.mode {
            Mode::Adaptive => {
                let mut run = AdaptiveRun::new(
                    constraints.clone(),
                    self.config.fit.clone(),
                    self.config.grid.clone(),
                    phantoms.clone(),
                )?;
                let first = run.recommend()?;
                (Engine::Adaptive(Box::new(run)), first)
            }
            Mode::Classic => {
                let stairs = StaircaseState::classic();
                let first = stairs.current_params();
                (Engine::Classic(stairs), first)
            }
        };
        let handle = SessionHandle {
            session_id: session_id.clone(),
            mode: req.mode,
            constraints: constraints.clone(),
            created_at: created_at.clone(),
            status: SessionStatus::Open,
        };
        let mut session = Session {
            handle,
            seed: req.seed,
            engine,
            outcomes: phantoms.clone(),
            recommendations: vec![first],
            pending: Some(first),
            termination: None,
            standardized: None,
            outcome_tokens: HashMap::new(),
            client_token: req.client_token.clone(),
        };
        if persist {
            if let Some(store) = &self.store {
                store.append(
                    &session_id,
                    &StoreEvent::Created {
                        session_id: session_id.clone(),
                        mode: req.mode,
                        seed: req.seed,
                        constraints,
                        phantoms,
                        created_at,
                        client_token: req.client_token.clone(),
                    },
                )?;
            }
        }
        let view = session.posterior_view(&self.config.grid)?.map(Arc::new);
        let response = session.response();
        let slot = Arc::new(SessionSlot { session: Mutex::new(session), snapshot: RwLock::new(view) });
        self.sessions.write().insert(session_id.clone(), slot);
        if let Some(token) = req.client_token {
            tokens.insert(token, session_id.clone());
        }
        tracing::info!(session = %session_id, mode = ?req.mode, "session created");
        Ok(response)
    }

    pub fn session(&self, id: &str) -> Result<SessionResponse> {
        Ok(self.slot(id)?.session.lock().response())
    }

    pub fn report_outcome(&self, id: &str, req: OutcomeRequest) -> Result<OutcomeResponse> {
        let params = parse_native(req.l, req.k)?;
        let slot = self.slot(id)?;
        let mut s = slot.session.lock();
        if let Some(token) = &req.token {
            if let Some(done) = s.outcome_tokens.get(token) {
                return Ok(done.clone());
            }
        }
        if s.handle.status == SessionStatus::Closed {
            return Err(Error::State(format!("session {id} is closed")));
        }
        let mismatch = s.pending != Some(params);
        if mismatch {
            tracing::warn!(session = id, reported = %params, pending = ?s.pending, "outcome differs from the pending recommendation");
        }
        let budget = self.config.am_budget;
        let index = s.n_trials() + 1;
        let (outcome, next, termination) = match &mut s.engine {
            Engine::Adaptive(run) => {
                let outcome = run.observe(params, req.passed)?;
                if run.n_trials() >= budget {
                    (outcome, None, None)
                } else {
                    (outcome, Some(run.recommend()?), None)
                }
            }
            Engine::Classic(stairs) => {
                // the staircase applies the outcome at its own current L
                stairs.step_indexed(req.passed, index)?;
                let outcome = *stairs.trial_log.last().expect("just stepped");
                if stairs.terminated {
                    let estimate = fit_logistic_threshold(&stairs.trial_log)?;
                    let reason = stairs.termination_reason.expect("set on termination");
                    (outcome, None, Some(Termination::Classic { estimate, reason }))
                } else {
                    (outcome, Some(stairs.current_params()), None)
                }
            }
        };
        s.outcomes.push(outcome);
        let mut termination = termination;
        if next.is_none() && termination.is_none() {
            let state = standardize_posterior(
                &s.outcomes,
                &s.handle.constraints,
                &self.config.standardization,
                &self.config.fit,
            )?;
            let curve = extract_isocontour(&state.predict_grid(&GridSpec::threshold_slices())?);
            let psi = curve.at(crate::staircase::CLASSIC_K)?;
            s.standardized = Some(state);
            termination = Some(Termination::Adaptive { curve, psi_at_classic_k: psi });
        }
        s.pending = next;
        if let Some(n) = next {
            s.recommendations.push(n);
        }
        if termination.is_some() {
            s.termination = termination.clone();
            s.handle.status = SessionStatus::Closed;
        }
        if let Some(store) = &self.store {
            store.append(id, &StoreEvent::Outcome { outcome, next })?;
            if termination.is_some() {
                store.append(id, &StoreEvent::Closed)?;
            }
        }
        let response = OutcomeResponse {
            outcome,
            mismatch,
            n_trials: s.n_trials(),
            next: s.recommendation(),
            termination,
        };
        if let Some(token) = req.token {
            s.outcome_tokens.insert(token, response.clone());
        }
        let view = s.posterior_view(&self.config.grid)?.map(Arc::new);
        *slot.snapshot.write() = view;
        Ok(response)
    }

    /// Posterior as of the last completed update; does not wait for an
    /// update in progress.
    pub fn posterior(&self, id: &str) -> Result<Arc<PosteriorView>> {
        let slot = self.slot(id)?;
        let snap = slot.snapshot.read().clone();
        snap.ok_or_else(|| Error::Unsupported("classic sessions report a threshold, not a posterior grid".into()))
    }

    /// Full record of a session, written to the store when one is
    /// configured.
    pub fn archive(&self, id: &str) -> Result<SessionRecord> {
        let slot = self.slot(id)?;
        let mut s = slot.session.lock();
        let mut snapshots = Vec::new();
        let (hyperparameters, model_state) = match &mut s.engine {
            Engine::Adaptive(run) => {
                snapshots.push(run.posterior_grid()?.clone());
                (Some(run.state().hyperparameters.clone()), Some(run.state().clone()))
            }
            Engine::Classic(_) => (None, None),
        };
        if let Some(state) = &s.standardized {
            snapshots.push(state.predict_grid(&self.config.grid)?);
        }
        let record = SessionRecord {
            session_id: s.handle.session_id.clone(),
            mode: s.handle.mode,
            seed: s.seed,
            constraints: s.handle.constraints.clone(),
            outcomes: s.outcomes.clone(),
            posterior_snapshots: snapshots,
            hyperparameters,
            model_state,
            recommendations: s.recommendations.clone(),
            standardization: (s.handle.mode == Mode::Adaptive).then(|| self.config.standardization.clone()),
            created_at: Some(s.handle.created_at.clone()),
            closed: s.handle.status == SessionStatus::Closed,
        };
        if let Some(store) = &self.store {
            store.write_archive(&record)?;
        }
        Ok(record)
    }

    /// Re-runs an archived session's phantoms and trials in order on this
    /// service and returns the resulting record. The original id is kept
    /// when free.
    pub fn replay(&self, record: &SessionRecord) -> Result<SessionRecord> {
        let id = if self.sessions.read().contains_key(&record.session_id) {
            uuid::Uuid::new_v4().simple().to_string()
        } else {
            record.session_id.clone()
        };
        self.replay_as(record, id, false)
    }

    fn replay_as(&self, record: &SessionRecord, id: String, persist: bool) -> Result<SessionRecord> {
        let phantoms = record
            .outcomes
            .iter()
            .filter(|o| o.phantom_kind == Some(PhantomKind::Primer))
            .map(|o| PhantomInput { params: o.params, passed: o.passed })
            .collect();
        let req = CreateSessionRequest {
            mode: record.mode,
            constraints: Some(record.constraints.clone()),
            seed: record.seed,
            phantoms,
            client_token: None,
        };
        let created_at = record.created_at.clone().unwrap_or_else(now_rfc3339);
        self.create_with_id(req, id.clone(), created_at, persist)?;
        for o in record.outcomes.iter().filter(|o| !o.phantom) {
            let (l, k) = o.params.as_f64();
            self.report_outcome(&id, OutcomeRequest { l, k, passed: o.passed, token: None })?;
        }
        self.archive(&id)
    }

    /// Rebuilds every session in the store's event logs.
    pub fn restore_from_store(&self) -> Result<usize> {
        let Some(store) = &self.store else { return Ok(0) };
        let mut restored = 0;
        for id in store.session_ids()? {
            if self.sessions.read().contains_key(&id) {
                continue;
            }
            let events = store.read_events(&id)?;
            let Some(StoreEvent::Created { mode, seed, constraints, phantoms, created_at, client_token, .. }) =
                events.first().cloned()
            else {
                tracing::warn!(session = %id, "log without a creation event");
                continue;
            };
            let mut outcomes = phantoms;
            outcomes.extend(events.iter().filter_map(|e| match e {
                StoreEvent::Outcome { outcome, .. } => Some(*outcome),
                _ => None,
            }));
            let record = SessionRecord {
                session_id: id.clone(),
                mode,
                seed,
                constraints,
                outcomes,
                posterior_snapshots: vec![],
                hyperparameters: None,
                model_state: None,
                recommendations: vec![],
                standardization: None,
                created_at: Some(created_at),
                closed: false,
            };
            let store_off = Self { store: None, ..self.shallow() };
            store_off.replay_as(&record, id.clone(), false)?;
            let slot = store_off.slot(&id)?;
            if let Some(token) = client_token {
                slot.session.lock().client_token = Some(token.clone());
                self.create_tokens.lock().insert(token, id.clone());
            }
            self.sessions.write().insert(id, slot);
            restored += 1;
        }
        Ok(restored)
    }

    fn shallow(&self) -> Self {
        Self {
            config: self.config.clone(),
            store: None,
            sessions: RwLock::new(HashMap::new()),
            create_tokens: Mutex::new(HashMap::new()),
        }
    }
}
