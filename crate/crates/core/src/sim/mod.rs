//! Virtual participants and sampling-policy simulations.

pub mod cohort;
pub mod participant;
pub mod policy;

pub use cohort::{
    mean_rmse_at, paired_difference, run_cohort, summarize, synthetic_cohort, CohortConfig, PolicySummary,
};
pub use participant::{
    halton_point, halton_unit, make_virtual_participant, make_virtual_participant_with, GeneratorConfig,
    NaturalSpline, VirtualParticipant,
};
pub use policy::{
    band_curves, budget_snapshot, censored_rmse, isocontour_rmse, run_policy, CensoredCurve, Policy, PolicyRun, RmseRule,
    SimConfig,
};
