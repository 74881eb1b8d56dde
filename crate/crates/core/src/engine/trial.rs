//! One insertion trial sampled on a fixed 1 kHz clock.
//!
//! Position updates may arrive at any rate. Between updates the last
//! positions are held, so the logged samples always sit on the millisecond
//! grid `t = k / 1000`.

use serde::{Deserialize, Serialize};

use crate::engine::schedule::{ScheduledTrial, TrialKind};
use crate::error::{Error, Result};
use crate::tissue::{Outcome, PatientModel, PunctureState, Tissue};

pub const SAMPLE_RATE_HZ: f64 = 1000.0;

fn tick_time(k: u64) -> f64 {
    k as f64 / SAMPLE_RATE_HZ
}

/// Smallest tick whose time is at or after `t`.
fn first_tick_at_or_after(t: f64) -> u64 {
    let mut k = (t * SAMPLE_RATE_HZ).ceil().max(0.0) as u64;
    while k > 0 && tick_time(k - 1) >= t {
        k -= 1;
    }
    while tick_time(k) < t {
        k += 1;
    }
    k
}

/// Raw client input: seconds since trial start and both device positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionUpdate {
    pub t: f64,
    pub p_touhy: f64,
    pub p_lor_raw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub p_touhy: f64,
    pub p_lor_raw: f64,
    pub f_touhy: f64,
    pub f_lor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub participant: String,
    pub trial_index: usize,
    pub kind: TrialKind,
    pub body_mass: f64,
    pub feedback_allowed: bool,
    pub samples: Vec<Sample>,
    pub final_depth: f64,
    pub punctured: Vec<Tissue>,
    pub outcome: Outcome,
    /// LOR device position when the needle first reached the skin.
    pub lor_zero_offset: Option<f64>,
}

impl TrialRecord {
    pub fn model(&self) -> Result<PatientModel> {
        PatientModel::new(self.body_mass)
    }

    pub fn scheduled(&self) -> ScheduledTrial {
        ScheduledTrial { trial_index: self.trial_index, kind: self.kind, body_mass: self.body_mass }
    }
}

#[derive(Debug, Clone, Copy)]
struct Held {
    t: f64,
    pos: PositionUpdate,
    logged: bool,
}

/// An active trial. Consumed by [`Trial::commit`].
#[derive(Debug, Clone)]
pub struct Trial {
    participant: String,
    scheduled: ScheduledTrial,
    feedback_allowed: bool,
    model: PatientModel,
    samples: Vec<Sample>,
    state: PunctureState,
    held: Option<Held>,
    next_tick: u64,
    lor_zero_offset: Option<f64>,
}

impl Trial {
    pub fn new(
        participant: impl Into<String>,
        scheduled: ScheduledTrial,
        feedback_allowed: bool,
    ) -> Result<Self> {
        let model = PatientModel::new(scheduled.body_mass)?;
        Ok(Self::with_model(participant, scheduled, feedback_allowed, model))
    }

    pub fn with_model(
        participant: impl Into<String>,
        scheduled: ScheduledTrial,
        feedback_allowed: bool,
        model: PatientModel,
    ) -> Self {
        Trial {
            participant: participant.into(),
            scheduled,
            feedback_allowed: feedback_allowed && scheduled.kind == TrialKind::Familiarization,
            model,
            samples: Vec::new(),
            state: PunctureState::default(),
            held: None,
            next_tick: 0,
            lor_zero_offset: None,
        }
    }

    pub fn model(&self) -> &PatientModel {
        &self.model
    }

    pub fn scheduled(&self) -> ScheduledTrial {
        self.scheduled
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn puncture_state(&self) -> PunctureState {
        self.state
    }

    /// Whether any position update has arrived.
    pub fn has_input(&self) -> bool {
        self.held.is_some()
    }

    pub fn lor_zero_offset(&self) -> Option<f64> {
        self.lor_zero_offset
    }

    fn log_tick(&mut self, pos: PositionUpdate) {
        let t = tick_time(self.next_tick);
        self.next_tick += 1;
        if pos.p_touhy >= 0.0 {
            self.model.observe_depth(&mut self.state, pos.p_touhy);
            if self.lor_zero_offset.is_none() {
                self.lor_zero_offset = Some(pos.p_lor_raw);
            }
        }
        let (f_touhy, f_lor) = self.model.render_forces(pos.p_touhy, &self.state);
        self.samples.push(Sample { t, p_touhy: pos.p_touhy, p_lor_raw: pos.p_lor_raw, f_touhy, f_lor });
    }

    /// Feeds one position update and returns the forces the devices should
    /// render for it.
    pub fn ingest(&mut self, t: f64, p_touhy: f64, p_lor_raw: f64) -> Result<(f64, f64)> {
        if !(t.is_finite() && p_touhy.is_finite() && p_lor_raw.is_finite()) {
            return Err(Error::Validation("non-finite position update".into()));
        }
        if t < 0.0 {
            return Err(Error::Validation(format!("negative sample time {t}")));
        }
        let pos = PositionUpdate { t, p_touhy, p_lor_raw };
        match self.held {
            Some(h) if t < h.t => {
                return Err(Error::Validation(format!(
                    "sample time {t} s precedes previous update at {} s",
                    h.t
                )));
            }
            Some(h) => {
                while tick_time(self.next_tick) < t {
                    self.log_tick(h.pos);
                }
            }
            None => self.next_tick = first_tick_at_or_after(t),
        }
        let mut held = Held { t, pos, logged: false };
        if tick_time(self.next_tick) <= t {
            self.log_tick(pos);
            held.logged = true;
        }
        self.held = Some(held);

        let mut preview = self.state;
        if p_touhy >= 0.0 {
            self.model.observe_depth(&mut preview, p_touhy);
        }
        Ok(self.model.render_forces(p_touhy, &preview))
    }

    /// Ends the trial at the current needle depth and classifies it.
    pub fn commit(mut self) -> Result<TrialRecord> {
        let held = self.held.ok_or_else(|| Error::State("commit on a trial with no samples".into()))?;
        if !held.logged {
            self.log_tick(held.pos);
        }
        let last = *self.samples.last().expect("at least one sample logged");
        let outcome = self.model.classify_outcome(last.p_touhy);
        Ok(TrialRecord {
            participant: self.participant,
            trial_index: self.scheduled.trial_index,
            kind: self.scheduled.kind,
            body_mass: self.scheduled.body_mass,
            feedback_allowed: self.feedback_allowed,
            samples: self.samples,
            final_depth: last.p_touhy,
            punctured: self.state.punctured(),
            outcome,
            lor_zero_offset: self.lor_zero_offset,
        })
    }
}

/// Re-simulates a record's position stream through a fresh trial.
pub fn replay(record: &TrialRecord) -> Result<TrialRecord> {
    replay_with(record, record.model()?)
}

pub fn replay_with(record: &TrialRecord, model: PatientModel) -> Result<TrialRecord> {
    let mut trial = Trial::with_model(
        record.participant.clone(),
        record.scheduled(),
        record.feedback_allowed,
        model,
    );
    for s in &record.samples {
        trial.ingest(s.t, s.p_touhy, s.p_lor_raw)?;
    }
    trial.commit()
}
