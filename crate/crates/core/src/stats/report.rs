//! Study-level aggregation: per-participant rates and strategy metrics,
//! grouped by experience level or trial outcome, with the rank tests used
//! to compare groups.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::record::write_atomic;
use crate::engine::TrialKind;
use crate::error::Result;
use crate::kinematics::TrialMetrics;
use crate::stats::bootstrap::{bootstrap_mean_ci, mean};
use crate::stats::level::{assign_level, ParticipantProfile};
use crate::stats::rank::{kruskal_wallis, pairwise_rank_sum, wilcoxon_signed_rank, StatResult};
use crate::tissue::{OutcomeKind, Tissue};

pub const EXPERIENCED_MIN_EPIDURALS: u32 = 500;
pub const DEFAULT_REPORT_SEED: u64 = 20_211_111;
const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub group: String,
    pub n: usize,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub analysis: String,
    pub result: StatResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub n_participants: usize,
    pub n_trials: usize,
    /// Participants in the metrics without a usable profile.
    pub unmatched: Vec<String>,
    pub level_summary: Vec<SummaryRow>,
    pub outcome_summary: Vec<SummaryRow>,
    pub layer_summary: Vec<SummaryRow>,
    pub vas_summary: Vec<SummaryRow>,
    pub tests: Vec<NamedTest>,
}

/// Hands out a distinct bootstrap seed per summary cell.
struct Seeds(u64);

impl Seeds {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        self.0
    }

    fn summarize(&mut self, metric: &str, group: &str, values: &[f64]) -> Option<SummaryRow> {
        if values.is_empty() {
            return None;
        }
        let (ci_lo, ci_hi) = bootstrap_mean_ci(values, self.next()).ok()?;
        Some(SummaryRow {
            metric: metric.to_string(),
            group: group.to_string(),
            n: values.len(),
            mean: mean(values),
            ci_lo,
            ci_hi,
        })
    }
}

pub fn level_label(level: u8) -> String {
    format!("level{level}")
}

/// Mean VAS score and bootstrap CI per question for inexperienced
/// (< 500 epidurals) and experienced participants. Participants with no
/// responses or no epidural estimate are left out.
pub fn vas_report(profiles: &[ParticipantProfile], seed: u64) -> Vec<SummaryRow> {
    vas_rows(profiles, &mut Seeds(seed))
}

fn vas_rows(profiles: &[ParticipantProfile], seeds: &mut Seeds) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(String, &'static str), Vec<f64>> = BTreeMap::new();
    for p in profiles.iter().filter(|p| !p.vas_responses.is_empty()) {
        let Some(n) = p.n_epidurals_estimate else { continue };
        let group = if n >= EXPERIENCED_MIN_EPIDURALS { "Experienced" } else { "Inexperienced" };
        for (q, v) in &p.vas_responses {
            cells.entry((q.clone(), group)).or_default().push(*v);
        }
    }
    cells.iter().filter_map(|((q, g), v)| seeds.summarize(q, g, v)).collect()
}

#[derive(Debug, Default)]
struct ParticipantStats {
    rates: BTreeMap<OutcomeKind, f64>,
    abs_error: f64,
    probe_count: f64,
    probe_depth: Option<f64>,
    probe_rate: Option<f64>,
    by_outcome: BTreeMap<OutcomeKind, [Option<f64>; 3]>,
    density: BTreeMap<Tissue, f64>,
    velocity: BTreeMap<Tissue, f64>,
}

fn mean_opt(xs: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.into_iter().flatten().collect();
    (!v.is_empty()).then(|| mean(&v))
}

const OUTCOMES: [OutcomeKind; 3] =
    [OutcomeKind::FailedEpidural, OutcomeKind::Success, OutcomeKind::DuralPuncture];

fn participant_stats(trials: &[&TrialMetrics]) -> ParticipantStats {
    let n = trials.len() as f64;
    let rates = OUTCOMES
        .iter()
        .map(|&o| (o, trials.iter().filter(|t| t.outcome == o).count() as f64 / n))
        .collect();
    let probe_triplet = |ts: &[&&TrialMetrics]| -> [Option<f64>; 3] {
        if ts.is_empty() {
            return [None; 3];
        }
        [
            Some(ts.iter().map(|t| t.probe_count as f64).sum::<f64>() / ts.len() as f64),
            mean_opt(ts.iter().map(|t| t.probe_mean_depth)),
            mean_opt(ts.iter().map(|t| t.probe_mean_rate)),
        ]
    };
    let by_outcome = OUTCOMES
        .iter()
        .filter_map(|&o| {
            let ts: Vec<&&TrialMetrics> = trials.iter().filter(|t| t.outcome == o).collect();
            (!ts.is_empty()).then(|| (o, probe_triplet(&ts)))
        })
        .collect();
    let all: Vec<&&TrialMetrics> = trials.iter().collect();
    let [count, depth, rate] = probe_triplet(&all);
    let layer_mean = |pick: &dyn Fn(&TrialMetrics) -> Option<f64>| -> Option<f64> {
        mean_opt(trials.iter().map(|t| pick(t)))
    };
    let density = Tissue::LAYERS
        .iter()
        .filter_map(|&l| layer_mean(&|t| t.density.get(&l).copied()).map(|v| (l, v)))
        .collect();
    let velocity = Tissue::ALL
        .iter()
        .filter_map(|&l| layer_mean(&|t| t.velocity.get(&l).copied()).map(|v| (l, v)))
        .collect();
    ParticipantStats {
        rates,
        abs_error: trials.iter().map(|t| t.abs_error).sum::<f64>() / n,
        probe_count: count.unwrap_or(0.0),
        probe_depth: depth,
        probe_rate: rate,
        by_outcome,
        density,
        velocity,
    }
}

/// Kruskal-Wallis across the non-empty groups, with Bonferroni-corrected
/// pairwise rank-sum tests when the omnibus test is significant.
fn compare_groups(analysis: &str, groups: Vec<(String, Vec<f64>)>) -> Option<NamedTest> {
    let groups: Vec<(String, Vec<f64>)> = groups.into_iter().filter(|g| !g.1.is_empty()).collect();
    if groups.len() < 2 {
        return None;
    }
    let slices: Vec<&[f64]> = groups.iter().map(|g| g.1.as_slice()).collect();
    let mut result = kruskal_wallis(&slices).ok()?;
    if result.p_value < SIGNIFICANCE {
        result.post_hoc = pairwise_rank_sum(&groups).ok();
    }
    Some(NamedTest { analysis: analysis.to_string(), result })
}

/// Builds every table of the study report from per-trial metrics. Only
/// test trials are used.
pub fn study_report(
    metrics: &[TrialMetrics],
    profiles: &[ParticipantProfile],
    seed: u64,
) -> StudyReport {
    let mut seeds = Seeds(seed);
    let levels: BTreeMap<&str, u8> = profiles
        .iter()
        .filter_map(|p| assign_level(p).ok().map(|l| (p.id.as_str(), l)))
        .collect();

    let mut by_participant: BTreeMap<&str, Vec<&TrialMetrics>> = BTreeMap::new();
    for m in metrics.iter().filter(|m| m.kind == TrialKind::Test) {
        by_participant.entry(m.participant.as_str()).or_default().push(m);
    }
    let mut unmatched = Vec::new();
    let mut per_level: BTreeMap<u8, Vec<ParticipantStats>> = BTreeMap::new();
    let mut n_trials = 0;
    for (id, trials) in &by_participant {
        match levels.get(id) {
            Some(&l) => {
                n_trials += trials.len();
                per_level.entry(l).or_default().push(participant_stats(trials));
            }
            None => unmatched.push(id.to_string()),
        }
    }
    let n_participants = per_level.values().map(Vec::len).sum();

    type Pick = fn(&ParticipantStats) -> Option<f64>;
    let level_metrics: [(&str, Pick); 7] = [
        ("failed_epidural_rate", |p| Some(p.rates[&OutcomeKind::FailedEpidural])),
        ("success_rate", |p| Some(p.rates[&OutcomeKind::Success])),
        ("dural_puncture_rate", |p| Some(p.rates[&OutcomeKind::DuralPuncture])),
        ("abs_error_mm", |p| Some(p.abs_error)),
        ("probe_count", |p| Some(p.probe_count)),
        ("probe_depth_mm", |p| p.probe_depth),
        ("probe_rate_hz", |p| p.probe_rate),
    ];
    let column = |pick: Pick, ps: &[ParticipantStats]| -> Vec<f64> {
        ps.iter().filter_map(pick).collect()
    };

    let mut level_summary = Vec::new();
    let mut tests = Vec::new();
    for (name, pick) in level_metrics {
        let mut groups = Vec::new();
        for (l, ps) in &per_level {
            let v = column(pick, ps);
            level_summary.extend(seeds.summarize(name, &level_label(*l), &v));
            groups.push((level_label(*l), v));
        }
        if name != "failed_epidural_rate" && name != "dural_puncture_rate" {
            tests.extend(compare_groups(&format!("{name}_by_level"), groups));
        }
    }

    for (l, ps) in &per_level {
        let diffs: Vec<f64> = ps
            .iter()
            .map(|p| p.rates[&OutcomeKind::FailedEpidural] - p.rates[&OutcomeKind::DuralPuncture])
            .collect();
        if let Ok(result) = wilcoxon_signed_rank(&diffs) {
            tests.push(NamedTest {
                analysis: format!("fe_vs_dp_rate_{}", level_label(*l)),
                result,
            });
        }
    }

    let mut outcome_summary = Vec::new();
    let all: Vec<&ParticipantStats> = per_level.values().flatten().collect();
    for (j, name) in ["probe_count", "probe_depth_mm", "probe_rate_hz"].iter().enumerate() {
        let mut groups = Vec::new();
        for o in OUTCOMES {
            let v: Vec<f64> =
                all.iter().filter_map(|p| p.by_outcome.get(&o).and_then(|t| t[j])).collect();
            outcome_summary.extend(seeds.summarize(name, o.label(), &v));
            groups.push((o.label().to_string(), v));
        }
        tests.extend(compare_groups(&format!("{name}_by_outcome"), groups));
    }

    let mut layer_summary = Vec::new();
    for (l, ps) in &per_level {
        for t in Tissue::LAYERS {
            let v: Vec<f64> = ps.iter().filter_map(|p| p.density.get(&t).copied()).collect();
            layer_summary.extend(seeds.summarize(&format!("density_{t}"), &level_label(*l), &v));
        }
        for t in Tissue::ALL {
            let v: Vec<f64> = ps.iter().filter_map(|p| p.velocity.get(&t).copied()).collect();
            layer_summary.extend(seeds.summarize(&format!("velocity_{t}"), &level_label(*l), &v));
        }
    }

    let vas_summary = vas_rows(profiles, &mut seeds);

    StudyReport {
        n_participants,
        n_trials,
        unmatched,
        level_summary,
        outcome_summary,
        layer_summary,
        vas_summary,
        tests,
    }
}

fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "group", "n", "mean", "ci_lo", "ci_hi"])?;
    for r in rows {
        w.write_record([
            r.metric.clone(),
            r.group.clone(),
            r.n.to_string(),
            r.mean.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Writes the report as CSV tables plus `summary.json` into `dir`.
///
/// Files: `level_summary.csv`, `outcome_summary.csv`, `layer_summary.csv`,
/// `vas_summary.csv` (columns `metric,group,n,mean,ci_lo,ci_hi`),
/// `tests.csv` (`analysis,test,statistic,df,p_value`) and `posthoc.csv`
/// (`analysis,group_a,group_b,statistic,p_raw,p_adjusted`).
pub fn write_report(report: &StudyReport, dir: &Path) -> Result<()> {
    write_atomic(&dir.join("level_summary.csv"), &summary_csv(&report.level_summary)?)?;
    write_atomic(&dir.join("outcome_summary.csv"), &summary_csv(&report.outcome_summary)?)?;
    write_atomic(&dir.join("layer_summary.csv"), &summary_csv(&report.layer_summary)?)?;
    write_atomic(&dir.join("vas_summary.csv"), &summary_csv(&report.vas_summary)?)?;

    let mut tests = csv::Writer::from_writer(Vec::new());
    tests.write_record(["analysis", "test", "statistic", "df", "p_value"])?;
    let mut posthoc = csv::Writer::from_writer(Vec::new());
    posthoc.write_record(["analysis", "group_a", "group_b", "statistic", "p_raw", "p_adjusted"])?;
    for t in &report.tests {
        let r = &t.result;
        tests.write_record([
            t.analysis.clone(),
            r.test.clone(),
            r.statistic.to_string(),
            r.df.map(|d| d.to_string()).unwrap_or_default(),
            r.p_value.to_string(),
        ])?;
        for c in r.post_hoc.iter().flatten() {
            posthoc.write_record([
                t.analysis.clone(),
                c.group_a.clone(),
                c.group_b.clone(),
                c.statistic.to_string(),
                c.p_raw.to_string(),
                c.p_adjusted.to_string(),
            ])?;
        }
    }
    write_atomic(&dir.join("tests.csv"), &tests.into_inner().map_err(|e| e.into_error())?)?;
    write_atomic(&dir.join("posthoc.csv"), &posthoc.into_inner().map_err(|e| e.into_error())?)?;

    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    write_atomic(&dir.join("summary.json"), &json)?;
    Ok(())
}
