//! Time-to-success evaluation of operation streams.
//!
//! Episodes are reduced to `(T, E)` observations where unrecoverable failures
//! become `T = ∞` ghost events. Everything downstream works on the resulting
//! Kaplan-Meier step CDFs: scalar projections (RMST, HRT, UPH, MTBF/A, AUC),
//! episode-clustered bootstrap intervals, the macro-averaged two-sample KS
//! test with pooled-resample p-values, analytic and simulated power budgets,
//! and the subsampling / null-calibration experiment harnesses.

// `!(x > 0.0)` is how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod error;
pub mod harness;
pub mod hypothesis;
pub mod ingest;
pub mod par;
pub mod power;
pub mod projections;
pub mod resample;
pub mod svg;
pub mod survival;
pub mod synthetic;

pub use error::{Error, Result};
pub use ingest::{
    build_cohort, extract_observations, parse_episode_logs, CellKey, Cohort, EpisodeLog,
    EpisodeRecord, HasObservations, Outcome, Side, SurvivalObservation,
};
pub use resample::RngPolicy;
pub use survival::{km_estimate, km_from_episodes, StepCdf};
