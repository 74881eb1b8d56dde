//! Live-session protocol.
//!
//! Every frame is one UTF-8 JSON object carrying a protocol version `v` and
//! a snake_case `type` tag. A [`SessionHandler`] owns one trainee's session
//! and turns each client message into zero or more server messages; the
//! transport only moves text frames.
//!
//! Outcomes are only revealed for familiarization trials (when feedback is
//! enabled) and in the summary sent after `end_session`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{generate_schedule, ScheduledTrial, SessionConfig, Trial, TrialKind, TrialRecord};
use crate::kinematics::{
    adjust_lor, detect_probes, layer_velocities, probe_metrics, PeakParams,
};
use crate::tissue::{Outcome, Tissue};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    StartSession {
        #[serde(default)]
        config: SessionConfig,
        #[serde(default)]
        participant: Option<String>,
    },
    StartTrial,
    PositionUpdate {
        t: f64,
        p_touhy: f64,
        p_lor_raw: f64,
    },
    Commit,
    EndSession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub probe_count: usize,
    pub probe_mean_depth_mm: Option<f64>,
    pub probe_mean_rate_hz: Option<f64>,
    /// Mean needle speed per layer entered, mm/s.
    pub layer_velocity_mm_s: BTreeMap<Tissue, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial_index: usize,
    pub kind: TrialKind,
    pub body_mass: f64,
    pub outcome: Outcome,
    pub final_depth: f64,
    pub strategy_summary: Option<StrategySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    SessionStarted {
        participant: String,
        n_trials: usize,
    },
    TrialStarted {
        trial_index: usize,
        kind: TrialKind,
        body_mass: f64,
    },
    ForceUpdate {
        t: f64,
        f_touhy: f64,
        f_lor: f64,
        depth: f64,
    },
    TrialResult {
        trial_index: usize,
        outcome: Option<Outcome>,
        feedback_allowed: bool,
        strategy_summary: Option<StrategySummary>,
    },
    SessionSummary {
        trials: Vec<TrialSummary>,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    UnsupportedVersion,
    InvalidConfig,
    NoSession,
    SessionActive,
    SessionEnded,
    TrialActive,
    NoTrial,
    ScheduleComplete,
    InvalidSample,
    EmptyTrial,
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    v: u32,
    #[serde(flatten)]
    msg: T,
}

pub fn encode_client(msg: &ClientMessage) -> String {
    serde_json::to_string(&Envelope { v: PROTOCOL_VERSION, msg }).expect("serializable")
}

pub fn encode_server(msg: &ServerMessage) -> String {
    serde_json::to_string(&Envelope { v: PROTOCOL_VERSION, msg }).expect("serializable")
}

pub fn decode_server(text: &str) -> Result<ServerMessage, serde_json::Error> {
    serde_json::from_str::<Envelope<ServerMessage>>(text).map(|e| e.msg)
}

pub fn decode_client(text: &str) -> Result<ClientMessage, ServerMessage> {
    #[derive(Deserialize)]
    struct Version {
        v: Option<u32>,
    }
    let err = |code, message: String| ServerMessage::Error { code, message };
    let version: Version =
        serde_json::from_str(text).map_err(|e| err(ErrorCode::BadMessage, e.to_string()))?;
    match version.v {
        Some(PROTOCOL_VERSION) => {}
        Some(other) => {
            return Err(err(
                ErrorCode::UnsupportedVersion,
                format!("protocol version {other} not supported (expected {PROTOCOL_VERSION})"),
            ))
        }
        None => return Err(err(ErrorCode::BadMessage, "missing protocol version `v`".into())),
    }
    serde_json::from_str::<Envelope<ClientMessage>>(text)
        .map(|e| e.msg)
        .map_err(|e| err(ErrorCode::BadMessage, e.to_string()))
}

/// Strategy feedback for a finished trial.
pub fn strategy_summary(record: &TrialRecord, params: &PeakParams) -> Option<StrategySummary> {
    let model = record.model().ok()?;
    let layer_velocity_mm_s = layer_velocities(record, &model)
        .into_iter()
        .map(|(t, v)| (t, v.mean_speed))
        .collect();
    let probes = match adjust_lor(record) {
        Ok(traj) => probe_metrics(&detect_probes(&traj, &model, params), &model),
        Err(_) => probe_metrics(&[], &model),
    };
    Some(StrategySummary {
        probe_count: probes.count,
        probe_mean_depth_mm: probes.mean_depth,
        probe_mean_rate_hz: probes.mean_rate,
        layer_velocity_mm_s,
    })
}

struct Active {
    participant: String,
    config: SessionConfig,
    schedule: Vec<ScheduledTrial>,
    next: usize,
    trial: Option<Trial>,
    last_force_t: Option<f64>,
    completed: Vec<TrialRecord>,
    ended: bool,
}

/// State machine for one connection.
pub struct SessionHandler {
    session: Option<Active>,
    default_participant: String,
    peak_params: PeakParams,
    sink: Box<dyn FnMut(TrialRecord) + Send>,
}

fn error(code: ErrorCode, message: impl Into<String>) -> Vec<ServerMessage> {
    vec![ServerMessage::Error { code, message: message.into() }]
}

/// Participant ids end up in record file names.
fn valid_participant(id: &str) -> bool {
    (1..=64).contains(&id.len())
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Minimum spacing between force updates sent to the client, s.
const FORCE_UPDATE_INTERVAL: f64 = 0.001;

impl SessionHandler {
    /// `sink` receives each committed record; it must not block.
    pub fn new(default_participant: impl Into<String>, sink: impl FnMut(TrialRecord) + Send + 'static) -> Self {
        SessionHandler {
            session: None,
            default_participant: default_participant.into(),
            peak_params: PeakParams::default(),
            sink: Box::new(sink),
        }
    }

    pub fn completed(&self) -> &[TrialRecord] {
        self.session.as_ref().map(|s| s.completed.as_slice()).unwrap_or(&[])
    }

    pub fn handle_text(&mut self, text: &str) -> Vec<String> {
        let replies = match decode_client(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![e],
        };
        replies.iter().map(encode_server).collect()
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::StartSession { config, participant } => self.start_session(config, participant),
            ClientMessage::StartTrial => self.start_trial(),
            ClientMessage::PositionUpdate { t, p_touhy, p_lor_raw } => self.position(t, p_touhy, p_lor_raw),
            ClientMessage::Commit => self.commit(),
            ClientMessage::EndSession => self.end_session(),
        }
    }

    fn start_session(&mut self, config: SessionConfig, participant: Option<String>) -> Vec<ServerMessage> {
        if self.session.as_ref().is_some_and(|s| !s.ended) {
            return error(ErrorCode::SessionActive, "a session is already running");
        }
        let schedule = match generate_schedule(&config) {
            Ok(s) => s,
            Err(e) => return error(ErrorCode::InvalidConfig, e.to_string()),
        };
        let participant = participant.unwrap_or_else(|| self.default_participant.clone());
        if !valid_participant(&participant) {
            return error(
                ErrorCode::InvalidConfig,
                "participant ids are 1-64 characters from A-Z, a-z, 0-9, '-', '_' and '.', not starting with '.'",
            );
        }
        let n_trials = schedule.len();
        self.session = Some(Active {
            participant: participant.clone(),
            config,
            schedule,
            next: 0,
            trial: None,
            last_force_t: None,
            completed: Vec::new(),
            ended: false,
        });
        vec![ServerMessage::SessionStarted { participant, n_trials }]
    }

    fn active(&mut self) -> Result<&mut Active, Vec<ServerMessage>> {
        match self.session.as_mut() {
            None => Err(error(ErrorCode::NoSession, "no session started")),
            Some(s) if s.ended => Err(error(ErrorCode::SessionEnded, "session has ended")),
            Some(s) => Ok(s),
        }
    }

    fn start_trial(&mut self) -> Vec<ServerMessage> {
        let s = match self.active() {
            Ok(s) => s,
            Err(e) => return e,
        };
        if s.trial.is_some() {
            return error(ErrorCode::TrialActive, "commit the current trial first");
        }
        let Some(&scheduled) = s.schedule.get(s.next) else {
            return error(ErrorCode::ScheduleComplete, "all scheduled trials are done");
        };
        match Trial::new(s.participant.clone(), scheduled, s.config.feedback_in_familiarization) {
            Ok(trial) => {
                s.trial = Some(trial);
                s.next += 1;
                s.last_force_t = None;
                vec![ServerMessage::TrialStarted {
                    trial_index: scheduled.trial_index,
                    kind: scheduled.kind,
                    body_mass: scheduled.body_mass,
                }]
            }
            Err(e) => error(ErrorCode::InvalidConfig, e.to_string()),
        }
    }

    fn position(&mut self, t: f64, p_touhy: f64, p_lor_raw: f64) -> Vec<ServerMessage> {
        let s = match self.active() {
            Ok(s) => s,
            Err(e) => return e,
        };
        let Some(trial) = s.trial.as_mut() else {
            return error(ErrorCode::NoTrial, "no trial in progress");
        };
        match trial.ingest(t, p_touhy, p_lor_raw) {
            Ok((f_touhy, f_lor)) => {
                if s.last_force_t.is_some_and(|last| t - last < FORCE_UPDATE_INTERVAL) {
                    return Vec::new();
                }
                s.last_force_t = Some(t);
                vec![ServerMessage::ForceUpdate { t, f_touhy, f_lor, depth: p_touhy }]
            }
            Err(e) => error(ErrorCode::InvalidSample, e.to_string()),
        }
    }

    fn commit(&mut self) -> Vec<ServerMessage> {
        let params = self.peak_params;
        let s = match self.active() {
            Ok(s) => s,
            Err(e) => return e,
        };
        let Some(trial) = s.trial.take() else {
            return error(ErrorCode::NoTrial, "no trial in progress");
        };
        if !trial.has_input() {
            let index = trial.scheduled().trial_index;
            s.trial = Some(trial);
            return error(ErrorCode::EmptyTrial, format!("trial {index} has no position samples"));
        }
        let record = match trial.commit() {
            Ok(r) => r,
            Err(e) => return error(ErrorCode::EmptyTrial, e.to_string()),
        };
        let reply = if record.feedback_allowed {
            ServerMessage::TrialResult {
                trial_index: record.trial_index,
                outcome: Some(record.outcome),
                feedback_allowed: true,
                strategy_summary: strategy_summary(&record, &params),
            }
        } else {
            ServerMessage::TrialResult {
                trial_index: record.trial_index,
                outcome: None,
                feedback_allowed: false,
                strategy_summary: None,
            }
        };
        s.completed.push(record.clone());
        (self.sink)(record);
        vec![reply]
    }

    fn end_session(&mut self) -> Vec<ServerMessage> {
        let params = self.peak_params;
        let s = match self.active() {
            Ok(s) => s,
            Err(e) => return e,
        };
        // an unfinished trial is discarded
        s.trial = None;
        s.ended = true;
        let trials = s
            .completed
            .iter()
            .map(|r| TrialSummary {
                trial_index: r.trial_index,
                kind: r.kind,
                body_mass: r.body_mass,
                outcome: r.outcome,
                final_depth: r.final_depth,
                strategy_summary: strategy_summary(r, &params),
            })
            .collect();
        vec![ServerMessage::SessionSummary { trials }]
    }
}
