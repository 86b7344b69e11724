//! Adaptive estimation of working-memory performance over spatial load `L`
//! and feature-binding load `K`.
//!
//! A variational Gaussian-process classifier models the probability of
//! reproducing a colored 5x5 pattern; entropy-guided acquisition picks the
//! next `(L, K)`, and the 50% isocontour of the posterior gives the
//! threshold curve. A one-up/one-down staircase with a logistic fit serves
//! as the one-axis reference. Around these sit the stimulus generator, a
//! simulation harness with virtual participants, the statistics used to
//! compare methods, and a session service.

pub mod acquisition;
pub mod domain;
pub mod error;
pub mod gp;
pub mod isocontour;
pub mod pattern;
pub mod service;
pub mod sim;
pub mod staircase;
pub mod stats;

pub use acquisition::{primer_sequence, propose_next, AdaptiveRun};
pub use domain::{
    snap_to_feasible, Bounds, FeasibilityConstraints, Mode, PhantomKind, Polygon, SessionRecord, StimulusParams,
    TrialOutcome,
};
pub use error::{Error, Result};
pub use gp::{fit, update_online, FitConfig, GpHyperparameters, GpModelState, GridSpec, PosteriorGrid};
pub use isocontour::{extract_isocontour, standardize_posterior, CurveSource, ThresholdCurve};
pub use pattern::{generate_standard_pattern, PatternSpec};
pub use service::{ServiceConfig, SessionService};
pub use staircase::{fit_logistic_threshold, StaircaseState, ThresholdEstimate};
