//! Sessions, trials and the synthetic operators that drive them.

mod agent;
pub mod record;
mod schedule;
mod trial;

pub use agent::{run_synthetic_agent, simulate_trial, AgentProfile, StopPolicy};
pub use schedule::{generate_schedule, ScheduledTrial, SessionConfig, TrialKind};
pub use trial::{replay, replay_with, PositionUpdate, Sample, Trial, TrialRecord, SAMPLE_RATE_HZ};
