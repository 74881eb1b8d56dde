//! Offline analysis of trial records: the LOR probing trace, probe events,
//! per-layer probe density and needle speed, and error size.

pub mod peaks;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{TrialKind, TrialRecord, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::tissue::{OutcomeKind, PatientModel, Tissue};

/// LOR plunger motion relative to the needle, on samples where the needle
/// is in tissue (`p_touhy > 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedTrajectory {
    pub t: Vec<f64>,
    pub p_adj: Vec<f64>,
    /// Needle depth at the same samples, for layer lookup.
    pub p_touhy: Vec<f64>,
}

pub fn adjust_lor(record: &TrialRecord) -> Result<AdjustedTrajectory> {
    let offset = record.lor_zero_offset.ok_or_else(|| {
        Error::Analysis(format!(
            "trial {} of {} never reached the skin; no LOR zero point",
            record.trial_index, record.participant
        ))
    })?;
    let mut traj = AdjustedTrajectory { t: Vec::new(), p_adj: Vec::new(), p_touhy: Vec::new() };
    for s in record.samples.iter().filter(|s| s.p_touhy > 0.0) {
        traj.t.push(s.t);
        traj.p_adj.push((s.p_lor_raw - offset) - s.p_touhy);
        traj.p_touhy.push(s.p_touhy);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    /// mm
    pub min_prominence: f64,
    /// s
    pub min_separation: f64,
    /// mm above the calibrated zero
    pub min_height: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        PeakParams { min_prominence: 0.5, min_separation: 0.050, min_height: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeEvent {
    pub t_peak: f64,
    /// Peak height of the adjusted trajectory, mm.
    pub depth: f64,
    /// Layer the needle tip was in at the peak.
    pub layer: Tissue,
}

pub fn detect_probes(
    traj: &AdjustedTrajectory,
    model: &PatientModel,
    params: &PeakParams,
) -> Vec<ProbeEvent> {
    peaks::find_peaks(
        &traj.p_adj,
        &traj.t,
        params.min_height,
        params.min_prominence,
        params.min_separation,
    )
    .into_iter()
    .map(|i| ProbeEvent {
        t_peak: traj.t[i],
        depth: traj.p_adj[i],
        layer: model.tissue_at(traj.p_touhy[i]).unwrap_or(Tissue::Skin),
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetrics {
    pub count: usize,
    pub mean_depth: Option<f64>,
    /// Mean of inverse gaps between consecutive probes; needs two probes.
    pub mean_rate: Option<f64>,
    pub per_layer_count: BTreeMap<Tissue, usize>,
    /// Probes per mm of mass-scaled layer thickness.
    pub per_layer_density: BTreeMap<Tissue, f64>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.into_iter().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

pub fn probe_metrics(events: &[ProbeEvent], model: &PatientModel) -> ProbeMetrics {
    let mut per_layer_count: BTreeMap<Tissue, usize> =
        Tissue::LAYERS.iter().map(|&t| (t, 0)).collect();
    for e in events {
        *per_layer_count.entry(e.layer).or_insert(0) += 1;
    }
    let per_layer_density = Tissue::LAYERS
        .iter()
        .filter_map(|&t| {
            let thickness = model.tissue_thickness(t)?;
            Some((t, per_layer_count[&t] as f64 / thickness))
        })
        .collect();
    ProbeMetrics {
        count: events.len(),
        mean_depth: mean(events.iter().map(|e| e.depth)),
        mean_rate: mean(events.windows(2).map(|w| 1.0 / (w[1].t_peak - w[0].t_peak))),
        per_layer_count,
        per_layer_density,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerVelocity {
    /// mm/s
    pub mean_speed: f64,
    /// Time spent in the layer, s.
    pub dwell: f64,
}

pub const VELOCITY_SMOOTHING_WINDOW: usize = 21;

/// Centered moving average; the window shrinks symmetrically at the edges.
fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let (lo, hi) = (i - h, i + h + 1);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Per-layer mean needle speed. Layers the needle never entered are absent.
pub fn layer_velocities(
    record: &TrialRecord,
    model: &PatientModel,
) -> BTreeMap<Tissue, LayerVelocity> {
    let s = &record.samples;
    let mut out = BTreeMap::new();
    if s.len() < 2 {
        return out;
    }
    let pos: Vec<f64> = s.iter().map(|x| x.p_touhy).collect();
    let smooth = moving_average(&pos, VELOCITY_SMOOTHING_WINDOW);
    let last = s.len() - 1;
    let mut acc: BTreeMap<Tissue, (f64, usize)> = BTreeMap::new();
    for i in 0..s.len() {
        let Some(layer) = model.tissue_at(s[i].p_touhy) else { continue };
        let (a, b) = (i.saturating_sub(1), (i + 1).min(last));
        let v = (smooth[b] - smooth[a]) / (s[b].t - s[a].t);
        let e = acc.entry(layer).or_insert((0.0, 0));
        e.0 += v.abs();
        e.1 += 1;
    }
    for (layer, (sum, n)) in acc {
        out.insert(
            layer,
            LayerVelocity { mean_speed: sum / n as f64, dwell: n as f64 / SAMPLE_RATE_HZ },
        );
    }
    out
}

/// Signed and absolute distance of the committed depth from the epidural space.
pub fn error_size(record: &TrialRecord, model: &PatientModel) -> (f64, f64) {
    let e = model.classify_outcome(record.final_depth).signed_error;
    (e, e.abs())
}

/// One row of the per-trial metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub participant: String,
    pub trial_index: usize,
    pub kind: TrialKind,
    pub body_mass: f64,
    pub outcome: OutcomeKind,
    pub signed_error: f64,
    pub abs_error: f64,
    pub final_depth: f64,
    pub probe_count: usize,
    pub probe_mean_depth: Option<f64>,
    pub probe_mean_rate: Option<f64>,
    pub density: BTreeMap<Tissue, f64>,
    pub velocity: BTreeMap<Tissue, f64>,
}

/// Runs the full per-trial analysis.
pub fn analyze_record(record: &TrialRecord, params: &PeakParams) -> Result<TrialMetrics> {
    let model = record.model()?;
    let traj = adjust_lor(record)?;
    let events = detect_probes(&traj, &model, params);
    let probes = probe_metrics(&events, &model);
    let (signed_error, abs_error) = error_size(record, &model);
    Ok(TrialMetrics {
        participant: record.participant.clone(),
        trial_index: record.trial_index,
        kind: record.kind,
        body_mass: record.body_mass,
        outcome: model.classify_outcome(record.final_depth).kind,
        signed_error,
        abs_error,
        final_depth: record.final_depth,
        probe_count: probes.count,
        probe_mean_depth: probes.mean_depth,
        probe_mean_rate: probes.mean_rate,
        density: probes.per_layer_density,
        velocity: layer_velocities(record, &model)
            .into_iter()
            .map(|(t, v)| (t, v.mean_speed))
            .collect(),
    })
}

const BASE_COLUMNS: [&str; 11] = [
    "participant",
    "trial_index",
    "kind",
    "body_mass_kg",
    "outcome",
    "signed_error_mm",
    "abs_error_mm",
    "final_depth_mm",
    "probe_count",
    "probe_mean_depth_mm",
    "probe_mean_rate_hz",
];

/// Header of the metrics CSV: base columns, then `density_<layer>` for each
/// layer in the stack and `velocity_<layer>` including the dura.
pub fn metrics_csv_header() -> Vec<String> {
    let mut h: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.extend(Tissue::LAYERS.iter().map(|t| format!("density_{t}")));
    h.extend(Tissue::ALL.iter().map(|t| format!("velocity_{t}")));
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv(rows: &[TrialMetrics], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(metrics_csv_header())?;
    for r in rows {
        let mut rec = vec![
            r.participant.clone(),
            r.trial_index.to_string(),
            format!("{:?}", r.kind),
            r.body_mass.to_string(),
            r.outcome.label().to_string(),
            r.signed_error.to_string(),
            r.abs_error.to_string(),
            r.final_depth.to_string(),
            r.probe_count.to_string(),
            opt(r.probe_mean_depth),
            opt(r.probe_mean_rate),
        ];
        rec.extend(Tissue::LAYERS.iter().map(|t| opt(r.density.get(t).copied())));
        rec.extend(Tissue::ALL.iter().map(|t| opt(r.velocity.get(t).copied())));
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics_csv(r: impl Read) -> Result<Vec<TrialMetrics>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != metrics_csv_header() {
        return Err(Error::Format("unexpected metrics CSV header".into()));
    }
    let num = |s: &str, col: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Format(format!("bad number `{s}` in column {col}")))
    };
    let opt_num = |s: &str, col: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, col).map(Some)
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let kind = match &rec[2] {
            "Familiarization" => TrialKind::Familiarization,
            "Test" => TrialKind::Test,
            other => return Err(Error::Format(format!("unknown trial kind `{other}`"))),
        };
        let mut density = BTreeMap::new();
        for (j, t) in Tissue::LAYERS.iter().enumerate() {
            if let Some(v) = opt_num(&rec[11 + j], "density")? {
                density.insert(*t, v);
            }
        }
        let mut velocity = BTreeMap::new();
        for (j, t) in Tissue::ALL.iter().enumerate() {
            if let Some(v) = opt_num(&rec[11 + Tissue::LAYERS.len() + j], "velocity")? {
                velocity.insert(*t, v);
            }
        }
        rows.push(TrialMetrics {
            participant: rec[0].to_string(),
            trial_index: rec[1]
                .parse()
                .map_err(|_| Error::Format(format!("bad trial index `{}`", &rec[1])))?,
            kind,
            body_mass: num(&rec[3], "body_mass_kg")?,
            outcome: rec[4].parse()?,
            signed_error: num(&rec[5], "signed_error_mm")?,
            abs_error: num(&rec[6], "abs_error_mm")?,
            final_depth: num(&rec[7], "final_depth_mm")?,
            probe_count: rec[8]
                .parse()
                .map_err(|_| Error::Format(format!("bad probe count `{}`", &rec[8])))?,
            probe_mean_depth: opt_num(&rec[9], "probe_mean_depth_mm")?,
            probe_mean_rate: opt_num(&rec[10], "probe_mean_rate_hz")?,
            density,
            velocity,
        });
    }
    Ok(rows)
}
