use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn epidural(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epidural"))
        .args(args)
        .env_remove("EPIDURAL_RECORD_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = epidural(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn jsonl_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&["simulate", "--profile", "expert", "--seed", "1", "--trials", "12", "--out", s(dir)]);
    }
    let (fa, fb) = (jsonl_files(&a), jsonl_files(&b));
    assert_eq!(fa.len(), 12);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert!(fs::read(x).unwrap() == fs::read(y).unwrap(), "{} differs", x.display());
    }
    assert_eq!(fs::read(a.join("participants.csv")).unwrap(), fs::read(b.join("participants.csv")).unwrap());
}

#[test]
fn simulate_defaults_to_the_environment_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_epidural"))
        .args(["simulate", "--profile", "novice", "--trials", "3", "--familiarization", "1"])
        .env("EPIDURAL_RECORD_DIR", &dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(jsonl_files(&dir).len(), 4);
}

#[test]
fn simulate_rejects_bad_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    let out = epidural(&["simulate", "--profile", "wizard", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    // usage errors must not look like "no input"
    assert_eq!(epidural(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(epidural(&["--help"]).status.code(), Some(0));
    let out = epidural(&["simulate", "--profile", "expert", "--trials", "4", "--out", s(tmp.path())]);
    assert!(!out.status.success());
    let out = epidural(&["simulate", "--profile", "expert", "--mass", "500", "--trials", "1", "--out", s(tmp.path())]);
    assert!(!out.status.success());
}

#[test]
fn analyze_on_empty_glob_fails_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("metrics.csv");
    let pattern = format!("{}/*.jsonl", tmp.path().display());
    let out = epidural(&["analyze", "--in", &pattern, "--out", s(&csv)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!csv.exists());
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn pipeline_orders_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    let rec = tmp.path().join("records");
    for p in ["novice", "intermediate", "expert"] {
        ok(&["simulate", "--profile", p, "--seed", "5", "--sessions", "3", "--trials", "6", "--out", s(&rec)]);
    }
    let metrics = tmp.path().join("metrics.csv");
    let pattern = format!("{}/*.jsonl", rec.display());
    ok(&["analyze", "--in", &pattern, "--out", s(&metrics), "--prominence", "0.5", "--separation", "50"]);
    let text = fs::read_to_string(&metrics).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 3 * 6);
    assert!(text.starts_with("participant,trial_index,kind,body_mass_kg,outcome,"));

    let report = tmp.path().join("report");
    ok(&[
        "report",
        "--metrics",
        s(&metrics),
        "--profiles",
        s(&rec.join("participants.csv")),
        "--out",
        s(&report),
    ]);
    for f in ["level_summary.csv", "outcome_summary.csv", "layer_summary.csv", "vas_summary.csv", "tests.csv", "posthoc.csv", "summary.json"] {
        assert!(report.join(f).is_file(), "{f}");
    }
    let levels = fs::read_to_string(report.join("level_summary.csv")).unwrap();
    let rate = |level: &str| -> f64 {
        let row = levels
            .lines()
            .find(|l| l.starts_with(&format!("success_rate,{level},")))
            .unwrap_or_else(|| panic!("no success_rate row for {level}"));
        row.split(',').nth(3).unwrap().parse().unwrap()
    };
    assert!(rate("level3") >= rate("level1"), "{levels}");
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(report.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_participants"], 9);
}

#[test]
fn replay_verifies_and_flags_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["simulate", "--profile", "intermediate", "--seed", "2", "--trials", "3", "--out", s(tmp.path())]);
    let pattern = format!("{}/*.jsonl", tmp.path().display());
    let out = ok(&["replay", "--in", &pattern, "--verify"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("(verified)").count(), 3);

    let victim = &jsonl_files(tmp.path())[1];
    let text = fs::read_to_string(victim).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // nudge one logged force; the engine will not reproduce it
    let i = lines.len() / 2;
    let mut sample: serde_json::Value = serde_json::from_str(&lines[i]).unwrap();
    let f = sample["f_touhy_n"].as_f64().unwrap();
    sample["f_touhy_n"] = serde_json::json!(f + 1e-9);
    lines[i] = serde_json::to_string(&sample).unwrap();
    fs::write(victim, lines.join("\n") + "\n").unwrap();

    let out = epidural(&["replay", "--in", s(victim), "--verify"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DIVERGED"));
    // without --verify it only reports
    assert!(epidural(&["replay", "--in", s(victim)]).status.success());
}
