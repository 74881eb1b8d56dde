//! Software model of a bimanual epidural needle-insertion trainer.
//!
//! - [`tissue`]: layered force model scaled by patient body mass.
//! - [`engine`]: session schedule, 1 kHz trial loop, synthetic operators, replay.
//! - [`kinematics`]: loss-of-resistance trajectory adjustment, probe detection
//!   and per-layer metrics.
//! - [`stats`]: level assignment, bootstrap intervals and rank tests used to
//!   assess the simulator's validity.
//! - [`session`]: transport-agnostic message protocol for live sessions.

pub mod engine;
pub mod error;
pub mod kinematics;
pub mod session;
pub mod stats;
pub mod tissue;

pub use engine::{
    generate_schedule, replay, run_synthetic_agent, AgentProfile, PositionUpdate, Sample,
    ScheduledTrial, SessionConfig, StopPolicy, Trial, TrialKind, TrialRecord,
};
pub use error::{Error, Result};
pub use kinematics::{
    adjust_lor, detect_probes, error_size, layer_velocities, probe_metrics, AdjustedTrajectory,
    PeakParams, ProbeEvent, ProbeMetrics, TrialMetrics,
};
pub use stats::{
    assign_level, bonferroni, bootstrap_ci, kruskal_wallis, wilcoxon_rank_sum,
    wilcoxon_signed_rank, ParticipantProfile, Position, StatResult,
};
pub use tissue::{
    build_patient_model, ForceRegion, Outcome, OutcomeKind, PatientModel, PunctureState, Stage,
    Tissue,
};
