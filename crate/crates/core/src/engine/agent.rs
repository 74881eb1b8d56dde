//! Scripted operators that close the loop on the force model.
//!
//! An agent pushes the needle at a steady speed while pulsing the LOR
//! plunger. It only "feels" the syringe force at the top of each probe
//! (continuously when it does not probe) and stops once that force has
//! fallen far enough below the strongest resistance felt so far, after its
//! reaction delay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::schedule::ScheduledTrial;
use crate::engine::trial::{PositionUpdate, Trial, TrialRecord, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::tissue::PatientModel;

const START_DEPTH_MM: f64 = -3.0;
const OVERRUN_MM: f64 = 10.0;
const MAX_TRIAL_S: f64 = 180.0;
const MAX_BURST_S: f64 = 0.3;
const PROBE_SETTLE_S: f64 = 0.1;
const SYRINGE_LENGTH_MM: (f64, f64) = (105.0, 150.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopPolicy {
    /// Drop in felt LOR force (N) below the running peak that triggers a stop.
    pub force_drop_threshold: f64,
    pub reaction_delay_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    /// mm/s
    pub advance_speed: f64,
    /// Hz; zero disables probing.
    pub probe_rate: f64,
    /// Plunger excursion per probe, mm.
    pub probe_depth: f64,
    pub stop_policy: StopPolicy,
    /// Std-dev of positional jitter on both devices, mm.
    pub noise: f64,
}

impl AgentProfile {
    pub fn novice() -> Self {
        AgentProfile {
            advance_speed: 6.0,
            probe_rate: 0.6,
            probe_depth: 3.0,
            stop_policy: StopPolicy { force_drop_threshold: 2.2, reaction_delay_ms: 500.0 },
            noise: 0.008,
        }
    }

    pub fn intermediate() -> Self {
        AgentProfile {
            advance_speed: 4.0,
            probe_rate: 1.5,
            probe_depth: 2.0,
            stop_policy: StopPolicy { force_drop_threshold: 3.0, reaction_delay_ms: 300.0 },
            noise: 0.005,
        }
    }

    pub fn expert() -> Self {
        AgentProfile {
            advance_speed: 2.0,
            probe_rate: 3.0,
            probe_depth: 1.0,
            stop_policy: StopPolicy { force_drop_threshold: 4.0, reaction_delay_ms: 150.0 },
            noise: 0.003,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "novice" => Some(Self::novice()),
            "intermediate" => Some(Self::intermediate()),
            "expert" => Some(Self::expert()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.advance_speed > 0.0
            && self.probe_rate >= 0.0
            && self.probe_depth >= 0.0
            && self.stop_policy.force_drop_threshold > 0.0
            && self.stop_policy.reaction_delay_ms >= 0.0
            && self.noise >= 0.0;
        if ok && [self.probe_rate, self.probe_depth, self.noise].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid agent profile {self:?}")))
        }
    }
}

struct Agent {
    speed: f64,
    threshold: f64,
    delay_s: f64,
    probe_rate: f64,
    probe_depth: f64,
    syringe_len: f64,
    phase: f64,
    limit_depth: f64,
    jitter: Option<Normal<f64>>,
    rng: ChaCha8Rng,

    tick: u64,
    depth: f64,
    entered_at: Option<f64>,
    last_sensed_cycle: Option<i64>,
    peak_felt: f64,
    detected_at: Option<f64>,
}

impl Agent {
    fn new(profile: &AgentProfile, model: &PatientModel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let speed = profile.advance_speed * rng.random_range(0.85..1.15);
        let threshold = profile.stop_policy.force_drop_threshold * rng.random_range(0.85..1.15);
        let delay_s = profile.stop_policy.reaction_delay_ms / 1000.0 * rng.random_range(0.8..1.2);
        let syringe_len = rng.random_range(SYRINGE_LENGTH_MM.0..SYRINGE_LENGTH_MM.1);
        let phase = if profile.probe_rate > 0.0 {
            rng.random_range(0.0..1.0 / profile.probe_rate)
        } else {
            0.0
        };
        let jitter = (profile.noise > 0.0).then(|| Normal::new(0.0, profile.noise).unwrap());
        Agent {
            speed,
            threshold,
            delay_s,
            probe_rate: profile.probe_rate,
            probe_depth: profile.probe_depth,
            syringe_len,
            phase,
            limit_depth: model.total_depth() + OVERRUN_MM,
            jitter,
            rng,
            tick: 0,
            depth: START_DEPTH_MM,
            entered_at: None,
            last_sensed_cycle: None,
            peak_felt: 0.0,
            detected_at: None,
        }
    }

    fn burst_len(&self) -> f64 {
        (0.5 / self.probe_rate).min(MAX_BURST_S)
    }

    /// Time into the probing pattern. Probing starts a short, seeded while
    /// after skin contact, so the LOR zero point is taken at rest.
    fn probe_clock(&self, t: f64) -> Option<f64> {
        (self.probe_rate > 0.0).then_some(())?;
        let tau = t - self.entered_at? - PROBE_SETTLE_S - self.phase;
        (tau >= 0.0).then_some(tau)
    }

    fn plunger(&self, t: f64) -> f64 {
        let Some(tau) = self.probe_clock(t) else { return 0.0 };
        let period = 1.0 / self.probe_rate;
        let d = self.burst_len();
        let within = tau.rem_euclid(period);
        if within < d {
            self.probe_depth * (std::f64::consts::PI * within / d).sin().powi(2)
        } else {
            0.0
        }
    }

    fn sense(&mut self, t: f64, f_lor: f64) {
        if self.detected_at.is_some() || self.entered_at.is_none() {
            return;
        }
        let felt = match self.probe_clock(t) {
            Some(tau) => {
                let period = 1.0 / self.probe_rate;
                let cycle = ((tau - 0.5 * self.burst_len()) / period).floor() as i64;
                if cycle < 0 || self.last_sensed_cycle.is_some_and(|c| c >= cycle) {
                    return;
                }
                self.last_sensed_cycle = Some(cycle);
                f_lor
            }
            None if self.probe_rate > 0.0 => return,
            None => f_lor,
        };
        self.peak_felt = self.peak_felt.max(felt);
        if self.peak_felt - felt >= self.threshold {
            self.detected_at = Some(t);
        }
    }

    /// Next position pair, or `None` when the agent commits.
    fn step(&mut self, last_forces: Option<(f64, f64)>) -> Option<PositionUpdate> {
        let dt = 1.0 / SAMPLE_RATE_HZ;
        let t = self.tick as f64 / SAMPLE_RATE_HZ;
        if let Some((_, f_lor)) = last_forces {
            self.sense(t, f_lor);
        }
        if self.detected_at.is_some_and(|td| t >= td + self.delay_s)
            || self.depth >= self.limit_depth
            || t > MAX_TRIAL_S
        {
            return None;
        }
        if self.tick > 0 {
            self.depth += self.speed * dt;
        }
        if self.entered_at.is_none() && self.depth > 0.0 {
            self.entered_at = Some(t);
        }
        let plunger = self.plunger(t);
        let (n1, n2) = match self.jitter {
            Some(n) => (n.sample(&mut self.rng), n.sample(&mut self.rng)),
            None => (0.0, 0.0),
        };
        self.tick += 1;
        Some(PositionUpdate {
            t,
            p_touhy: self.depth + n1,
            p_lor_raw: self.syringe_len + self.depth + plunger + n2,
        })
    }
}

fn drive(profile: &AgentProfile, trial: &mut Trial, seed: u64) -> Result<Vec<PositionUpdate>> {
    profile.validate()?;
    let mut agent = Agent::new(profile, trial.model(), seed);
    let mut stream = Vec::new();
    let mut forces = None;
    while let Some(u) = agent.step(forces) {
        forces = Some(trial.ingest(u.t, u.p_touhy, u.p_lor_raw)?);
        stream.push(u);
    }
    Ok(stream)
}

/// Runs an agent against `model` and returns its 1 kHz dual-device stream.
/// The last update is the committed position.
pub fn run_synthetic_agent(
    profile: &AgentProfile,
    model: &PatientModel,
    seed: u64,
) -> Result<Vec<PositionUpdate>> {
    let st = ScheduledTrial {
        trial_index: 0,
        kind: crate::engine::TrialKind::Test,
        body_mass: model.body_mass,
    };
    let mut trial = Trial::with_model("agent", st, false, model.clone());
    drive(profile, &mut trial, seed)
}

/// Runs an agent through one scheduled trial and commits it.
pub fn simulate_trial(
    profile: &AgentProfile,
    participant: &str,
    scheduled: ScheduledTrial,
    feedback_allowed: bool,
    seed: u64,
) -> Result<TrialRecord> {
    let mut trial = Trial::new(participant, scheduled, feedback_allowed)?;
    drive(profile, &mut trial, seed)?;
    trial.commit()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::TrialKind;
    use crate::tissue::OutcomeKind;

    fn outcome(profile: &AgentProfile, mass: f64, seed: u64) -> TrialRecord {
        let st = ScheduledTrial { trial_index: 0, kind: TrialKind::Test, body_mass: mass };
        simulate_trial(profile, "t", st, false, seed).unwrap()
    }

    #[test]
    fn expert_lands_in_the_space() {
        for seed in 0..5 {
            let rec = outcome(&AgentProfile::expert(), 71.0, seed);
            assert_eq!(rec.outcome.kind, OutcomeKind::Success, "seed {seed}: {}", rec.final_depth);
        }
    }

    #[test]
    fn slow_reaction_overshoots() {
        let model = PatientModel::new(71.0).unwrap();
        let width = model.epidural_window.width();
        let mut p = AgentProfile::expert();
        p.advance_speed = 5.0;
        p.stop_policy.reaction_delay_ms = 3000.0;
        // worst-case jitter still overshoots: 0.85 * 5 * 0.8 * 3 s
        assert!(0.85 * p.advance_speed * 0.8 * 3.0 > width);
        for seed in 0..3 {
            assert_eq!(outcome(&p, 71.0, seed).outcome.kind, OutcomeKind::DuralPuncture);
        }
    }

    #[test]
    fn stream_is_on_the_millisecond_grid() {
        let model = PatientModel::new(55.0).unwrap();
        let s = run_synthetic_agent(&AgentProfile::intermediate(), &model, 3).unwrap();
        assert!(s.len() > 1000);
        for (k, u) in s.iter().enumerate() {
            assert_eq!(u.t, k as f64 / 1000.0);
        }
        assert_eq!(s, run_synthetic_agent(&AgentProfile::intermediate(), &model, 3).unwrap());
    }

    #[test]
    fn rejects_invalid_profile() {
        let mut p = AgentProfile::novice();
        p.advance_speed = 0.0;
        let model = PatientModel::new(71.0).unwrap();
        assert!(run_synthetic_agent(&p, &model, 0).is_err());
    }
}
