//! Line-delimited JSON trial records.
//!
//! The first line is a header object (`"type": "header"`), followed by one
//! object per sample with fields `t_s`, `p_touhy_mm`, `p_lor_raw_mm`,
//! `f_touhy_n`, `f_lor_n`. Floats are written in shortest round-trip form,
//! so a write/read cycle is bit-exact.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::engine::schedule::TrialKind;
use crate::engine::trial::{Sample, TrialRecord};
use crate::error::{Error, Result};
use crate::tissue::{Outcome, OutcomeKind, Tissue};

pub const RECORD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    #[serde(rename = "type")]
    kind_tag: String,
    v: u32,
    participant: String,
    trial_index: usize,
    kind: TrialKind,
    body_mass_kg: f64,
    feedback_allowed: bool,
    final_depth_mm: f64,
    outcome: OutcomeKind,
    signed_error_mm: f64,
    lor_zero_offset_mm: Option<f64>,
    punctured: Vec<Tissue>,
    n_samples: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    t_s: f64,
    p_touhy_mm: f64,
    p_lor_raw_mm: f64,
    f_touhy_n: f64,
    f_lor_n: f64,
}

/// Serializes a record to its on-disk text form.
pub fn to_jsonl(record: &TrialRecord) -> Result<String> {
    let header = Header {
        kind_tag: "header".into(),
        v: RECORD_FORMAT_VERSION,
        participant: record.participant.clone(),
        trial_index: record.trial_index,
        kind: record.kind,
        body_mass_kg: record.body_mass,
        feedback_allowed: record.feedback_allowed,
        final_depth_mm: record.final_depth,
        outcome: record.outcome.kind,
        signed_error_mm: record.outcome.signed_error,
        lor_zero_offset_mm: record.lor_zero_offset,
        punctured: record.punctured.clone(),
        n_samples: record.samples.len(),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for s in &record.samples {
        let line = SampleLine {
            t_s: s.t,
            p_touhy_mm: s.p_touhy,
            p_lor_raw_mm: s.p_lor_raw,
            f_touhy_n: s.f_touhy,
            f_lor_n: s.f_lor,
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_jsonl(reader: impl BufRead) -> Result<TrialRecord> {
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty record".into()))??;
    let header: Header = serde_json::from_str(&first)?;
    if header.kind_tag != "header" {
        return Err(Error::Format("first line must be the header".into()));
    }
    if header.v != RECORD_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported record version {}", header.v)));
    }
    let mut samples = Vec::with_capacity(header.n_samples);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: SampleLine = serde_json::from_str(&line)?;
        samples.push(Sample {
            t: s.t_s,
            p_touhy: s.p_touhy_mm,
            p_lor_raw: s.p_lor_raw_mm,
            f_touhy: s.f_touhy_n,
            f_lor: s.f_lor_n,
        });
    }
    if samples.len() != header.n_samples {
        return Err(Error::Format(format!(
            "header declares {} samples, found {}",
            header.n_samples,
            samples.len()
        )));
    }
    Ok(TrialRecord {
        participant: header.participant,
        trial_index: header.trial_index,
        kind: header.kind,
        body_mass: header.body_mass_kg,
        feedback_allowed: header.feedback_allowed,
        samples,
        final_depth: header.final_depth_mm,
        punctured: header.punctured,
        outcome: Outcome { kind: header.outcome, signed_error: header.signed_error_mm },
        lor_zero_offset: header.lor_zero_offset_mm,
    })
}

pub fn read_record(path: impl AsRef<Path>) -> Result<TrialRecord> {
    let f = fs::File::open(path)?;
    read_jsonl(BufReader::new(f))
}

pub fn record_file_name(record: &TrialRecord) -> String {
    format!("{}_trial{:03}.jsonl", record.participant, record.trial_index)
}

/// Writes `contents` next to `path` and renames it into place, so readers
/// see either the whole file or nothing.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(contents)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Persists a record into `dir` and returns its path.
pub fn write_record(dir: &Path, record: &TrialRecord) -> Result<PathBuf> {
    let path = dir.join(record_file_name(record));
    write_atomic(&path, to_jsonl(record)?.as_bytes())?;
    Ok(path)
}

/// Background persistence so the sampling loop never waits on disk.
pub struct RecordWriter {
    tx: Option<mpsc::Sender<TrialRecord>>,
    handle: Option<JoinHandle<Vec<Result<PathBuf>>>>,
}

impl RecordWriter {
    pub fn spawn(dir: PathBuf) -> Self {
        let (tx, rx) = mpsc::channel::<TrialRecord>();
        let handle = std::thread::spawn(move || {
            rx.into_iter().map(|rec| write_record(&dir, &rec)).collect()
        });
        RecordWriter { tx: Some(tx), handle: Some(handle) }
    }

    pub fn sender(&self) -> mpsc::Sender<TrialRecord> {
        self.tx.clone().expect("writer is open")
    }

    pub fn submit(&self, record: TrialRecord) {
        // the receiver lives until `finish`
        let _ = self.tx.as_ref().expect("writer is open").send(record);
    }

    /// Flushes outstanding records and reports each write's result.
    pub fn finish(mut self) -> Vec<Result<PathBuf>> {
        drop(self.tx.take());
        self.handle.take().map(|h| h.join().unwrap_or_default()).unwrap_or_default()
    }
}
