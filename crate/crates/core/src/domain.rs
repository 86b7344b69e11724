//! Shared task vocabulary: difficulty points, outcomes, feasibility
//! constraints and the session audit record.
//!
//! The difficulty domain has two integer axes: spatial load `L` (occupied
//! tiles, 1..=16) and feature-binding load `K` (distinct colors, 1..=8). A
//! point is feasible when `K <= L`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpHyperparameters, PosteriorGrid};

pub const L_MIN: u32 = 1;
pub const L_MAX: u32 = 16;
pub const K_MIN: u32 = 1;
pub const K_MAX: u32 = 8;

/// Inclusive native ranges of both axes, used for `[0, 1]` scaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub l: (f64, f64),
    pub k: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            l: (L_MIN as f64, L_MAX as f64),
            k: (K_MIN as f64, K_MAX as f64),
        }
    }
}

impl Bounds {
    pub fn to_unit(&self, l: f64, k: f64) -> [f64; 2] {
        [
            (l - self.l.0) / (self.l.1 - self.l.0),
            (k - self.k.0) / (self.k.1 - self.k.0),
        ]
    }

    pub fn to_native(&self, unit: [f64; 2]) -> (f64, f64) {
        (
            self.l.0 + unit[0] * (self.l.1 - self.l.0),
            self.k.0 + unit[1] * (self.k.1 - self.k.0),
        )
    }

    pub fn contains(&self, l: f64, k: f64) -> bool {
        l >= self.l.0 && l <= self.l.1 && k >= self.k.0 && k <= self.k.1
    }

    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if ok(self.l) && ok(self.k) {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid axis bounds {self:?}")))
        }
    }
}

/// One integer point `(L, K)` of the difficulty domain.
///
/// Construction through [`StimulusParams::new`] enforces both the axis bounds
/// and `K <= L`. [`StimulusParams::nominal`] only checks bounds; it exists for
/// the classic staircase, whose first trials request `K = 3` at `L < 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct StimulusParams {
    l: u32,
    k: u32,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(rename = "L")]
    l: u32,
    #[serde(rename = "K")]
    k: u32,
}

impl TryFrom<RawParams> for StimulusParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        Self::nominal(raw.l, raw.k)
    }
}

impl From<StimulusParams> for RawParams {
    fn from(p: StimulusParams) -> Self {
        RawParams { l: p.l, k: p.k }
    }
}

impl StimulusParams {
    pub fn new(l: u32, k: u32) -> Result<Self> {
        let p = Self::nominal(l, k)?;
        if !p.is_feasible() {
            return Err(Error::Domain(format!("(L={l}, K={k}) violates K <= L")));
        }
        Ok(p)
    }

    pub fn nominal(l: u32, k: u32) -> Result<Self> {
        if !(L_MIN..=L_MAX).contains(&l) || !(K_MIN..=K_MAX).contains(&k) {
            return Err(Error::Domain(format!(
                "(L={l}, K={k}) outside L in {L_MIN}..={L_MAX}, K in {K_MIN}..={K_MAX}"
            )));
        }
        Ok(Self { l, k })
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn is_feasible(&self) -> bool {
        self.k <= self.l
    }

    /// Number of colors a rendered pattern can actually carry at this load.
    pub fn renderable(&self) -> Self {
        Self {
            l: self.l,
            k: self.k.min(self.l),
        }
    }

    pub fn as_f64(&self) -> (f64, f64) {
        (self.l as f64, self.k as f64)
    }
}

impl fmt::Display for StimulusParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(L={}, K={})", self.l, self.k)
    }
}

/// Why a synthetic observation was injected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    /// Client-supplied weak primer at real task coordinates.
    Primer,
    /// Fixed domain-corner anchor used for posterior standardization.
    Boundary,
    /// Data-driven positive label asserting an easy point is passed.
    Monotonicity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub params: StimulusParams,
    pub passed: bool,
    pub phantom: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom_kind: Option<PhantomKind>,
    /// 1-based trial ordinal; phantoms carry 0.
    pub index: u32,
}

impl TrialOutcome {
    pub fn trial(params: StimulusParams, passed: bool, index: u32) -> Self {
        Self {
            params,
            passed,
            phantom: false,
            phantom_kind: None,
            index,
        }
    }

    pub fn phantom(params: StimulusParams, passed: bool, kind: PhantomKind) -> Self {
        Self {
            params,
            passed,
            phantom: true,
            phantom_kind: Some(kind),
            index: 0,
        }
    }

    /// Whether this outcome counts toward the per-axis step cap.
    pub fn counts_for_cap(&self) -> bool {
        !self.phantom || self.phantom_kind == Some(PhantomKind::Primer)
    }
}

/// The points whose coordinates bound the step cap: real trials and primer
/// phantoms. Boundary and monotonicity phantoms never raise the cap.
pub fn cap_history(outcomes: &[TrialOutcome]) -> Vec<StimulusParams> {
    outcomes
        .iter()
        .filter(|o| o.counts_for_cap())
        .map(|o| o.params)
        .collect()
}

/// Checks that non-phantom indices strictly increase.
pub fn validate_outcome_order(outcomes: &[TrialOutcome]) -> Result<()> {
    let mut last = 0;
    for o in outcomes.iter().filter(|o| !o.phantom) {
        if o.index <= last {
            return Err(Error::InvalidInput(format!(
                "trial index {} does not follow {last}",
                o.index
            )));
        }
        last = o.index;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Adaptive,
    Classic,
}

/// Inclusion region in native `(L, K)` coordinates. Boundary points count as
/// inside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    /// The region `K <= L` within the default task bounds.
    pub fn task_mask() -> Self {
        Self {
            vertices: vec![
                [L_MIN as f64, K_MIN as f64],
                [L_MAX as f64, K_MIN as f64],
                [L_MAX as f64, K_MAX as f64],
                [K_MAX as f64, K_MAX as f64],
            ],
        }
    }

    pub fn contains(&self, l: f64, k: f64) -> bool {
        const EPS: f64 = 1e-9;
        let v = &self.vertices;
        let n = v.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let [ax, ay] = v[i];
            let [bx, by] = v[(i + 1) % n];
            let cross = (bx - ax) * (k - ay) - (by - ay) * (l - ax);
            let within = l >= ax.min(bx) - EPS
                && l <= ax.max(bx) + EPS
                && k >= ay.min(by) - EPS
                && k <= ay.max(by) + EPS;
            if cross.abs() <= EPS * (1.0 + (bx - ax).abs() + (by - ay).abs()) && within {
                return true;
            }
        }
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let [xi, yi] = v[i];
            let [xj, yj] = v[j];
            if (yi > k) != (yj > k) && l < (xj - xi) * (k - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityConstraints {
    pub polygon_mask: Polygon,
    pub integer_snap: bool,
    /// Largest permitted increase per axis beyond the history maximum.
    pub step_cap: u32,
    pub bounds: Bounds,
}

impl Default for FeasibilityConstraints {
    fn default() -> Self {
        Self {
            polygon_mask: Polygon::task_mask(),
            integer_snap: true,
            step_cap: 2,
            bounds: Bounds::default(),
        }
    }
}

impl FeasibilityConstraints {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.polygon_mask.vertices.len() < 3 {
            return Err(Error::Config("polygon mask needs at least 3 vertices".into()));
        }
        if self
            .polygon_mask
            .vertices
            .iter()
            .any(|v| !v[0].is_finite() || !v[1].is_finite())
        {
            return Err(Error::Config("polygon mask has non-finite vertices".into()));
        }
        if !self.integer_snap {
            return Err(Error::Config(
                "the task domain is integer; integer_snap must be enabled".into(),
            ));
        }
        if self.lattice().next().is_none() {
            return Err(Error::Config("mask excludes every integer point".into()));
        }
        Ok(())
    }

    /// Integer points within bounds and inside the mask (ignoring the step
    /// cap), ordered by `L` then `K`.
    pub fn lattice(&self) -> impl Iterator<Item = StimulusParams> + '_ {
        let (l_lo, l_hi) = (self.bounds.l.0.ceil() as u32, self.bounds.l.1.floor() as u32);
        let (k_lo, k_hi) = (self.bounds.k.0.ceil() as u32, self.bounds.k.1.floor() as u32);
        (l_lo.max(L_MIN)..=l_hi.min(L_MAX))
            .flat_map(move |l| (k_lo.max(K_MIN)..=k_hi.min(K_MAX)).map(move |k| (l, k)))
            .filter(|&(l, k)| self.polygon_mask.contains(l as f64, k as f64))
            .filter_map(|(l, k)| StimulusParams::nominal(l, k).ok())
    }

    pub fn admits(&self, l: f64, k: f64) -> bool {
        self.bounds.contains(l, k) && self.polygon_mask.contains(l, k)
    }

    /// Per-axis ceilings implied by the step cap, or `None` without history.
    pub fn cap_limits(&self, history: &[StimulusParams]) -> Option<(u32, u32)> {
        let max_l = history.iter().map(|p| p.l()).max()?;
        let max_k = history.iter().map(|p| p.k()).max()?;
        Some((max_l + self.step_cap, max_k + self.step_cap))
    }

    pub fn distance_scaled(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let ua = self.bounds.to_unit(a.0, a.1);
        let ub = self.bounds.to_unit(b.0, b.1);
        ((ua[0] - ub[0]).powi(2) + (ua[1] - ub[1]).powi(2)).sqrt()
    }
}

/// Maps a continuous proposal onto the feasible integer lattice.
///
/// The rounded point is returned when it lies inside bounds and mask and does
/// not exceed `history max + step_cap` on either axis. Otherwise the closest
/// admissible lattice point to `point` is returned, with distance measured in
/// `[0, 1]`-scaled coordinates and ties broken by smaller `L`, then smaller
/// `K`. Decreases are never limited. An empty history imposes no cap.
pub fn snap_to_feasible(
    point: (f64, f64),
    constraints: &FeasibilityConstraints,
    history: &[StimulusParams],
) -> Result<StimulusParams> {
    if !point.0.is_finite() || !point.1.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite point {point:?}")));
    }
    let caps = constraints.cap_limits(history);
    let admissible = |p: &StimulusParams| match caps {
        Some((cl, ck)) => p.l() <= cl && p.k() <= ck,
        None => true,
    };

    let (rl, rk) = (point.0.round(), point.1.round());
    if rl >= L_MIN as f64 && rk >= K_MIN as f64 && constraints.admits(rl, rk) {
        if let Ok(p) = StimulusParams::nominal(rl as u32, rk as u32) {
            if admissible(&p) {
                return Ok(p);
            }
        }
    }

    let mut best: Option<(f64, StimulusParams)> = None;
    for p in constraints.lattice().filter(admissible) {
        let d = constraints.distance_scaled(point, p.as_f64());
        // lattice() yields in (L, K) order, so strict < keeps the smallest on ties.
        if best.is_none_or(|(bd, _)| d < bd - 1e-12) {
            best = Some((d, p));
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| {
        Error::Config("no integer point satisfies the mask, bounds and step cap".into())
    })
}

/// Full audit trail of one session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub mode: Mode,
    pub seed: u64,
    pub constraints: FeasibilityConstraints,
    pub outcomes: Vec<TrialOutcome>,
    #[serde(default)]
    pub posterior_snapshots: Vec<PosteriorGrid>,
    #[serde(default)]
    pub hyperparameters: Option<GpHyperparameters>,
    /// Live model after the last update, for re-evaluation.
    #[serde(default)]
    pub model_state: Option<crate::gp::GpModelState>,
    /// Recommendations issued, in order (audit of the replay contract).
    #[serde(default)]
    pub recommendations: Vec<StimulusParams>,
    /// Phantom set used for the closing standardized refit.
    #[serde(default)]
    pub standardization: Option<crate::isocontour::StandardizationConfig>,
    #[serde(default)]
    pub created_at: Option<String>,
    #[serde(default)]
    pub closed: bool,
}
