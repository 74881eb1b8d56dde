use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use epidural_core::engine::simulate_trial;
use epidural_core::{
    adjust_lor, detect_probes, kruskal_wallis, wilcoxon_rank_sum, AgentProfile, PatientModel,
    PeakParams, PunctureState, ScheduledTrial, Trial, TrialKind,
};

fn test_trial(mass: f64) -> ScheduledTrial {
    ScheduledTrial { trial_index: 0, kind: TrialKind::Test, body_mass: mass }
}

fn force_model(c: &mut Criterion) {
    let model = PatientModel::new(85.0).unwrap();
    let depths: Vec<f64> = (0..1000).map(|i| i as f64 * model.total_depth() / 1000.0).collect();
    c.bench_function("render_forces/1000 depths", |b| {
        b.iter(|| {
            let mut state = PunctureState::default();
            let mut sum = 0.0;
            for &d in &depths {
                model.observe_depth(&mut state, d);
                sum += model.render_forces(d, &state).0;
            }
            black_box(sum)
        })
    });
    c.bench_function("build_patient_model", |b| b.iter(|| PatientModel::new(black_box(115.0)).unwrap()));
}

fn engine(c: &mut Criterion) {
    c.bench_function("ingest/10 s at 1 kHz", |b| {
        b.iter(|| {
            let mut trial = Trial::new("bench", test_trial(71.0), false).unwrap();
            for k in 0..10_000 {
                let t = k as f64 / 1000.0;
                let d = 5.0 * t;
                black_box(trial.ingest(t, d, 120.0 + d).unwrap());
            }
            trial.commit().unwrap()
        })
    });
    c.bench_function("simulate_trial/intermediate", |b| {
        b.iter(|| simulate_trial(&AgentProfile::intermediate(), "bench", test_trial(85.0), false, 7).unwrap())
    });
}

fn kinematics(c: &mut Criterion) {
    let record = simulate_trial(&AgentProfile::novice(), "bench", test_trial(85.0), false, 3).unwrap();
    let model = record.model().unwrap();
    let traj = adjust_lor(&record).unwrap();
    c.bench_function("detect_probes/novice trial", |b| {
        b.iter(|| detect_probes(black_box(&traj), &model, &PeakParams::default()))
    });
}

fn statistics(c: &mut Criterion) {
    let groups: Vec<Vec<f64>> =
        (0..3).map(|g| (0..40).map(|i| ((i * 37 + g * 11) % 23) as f64 + g as f64).collect()).collect();
    c.bench_function("kruskal_wallis/3x40", |b| {
        b.iter(|| kruskal_wallis(&[&groups[0], &groups[1], &groups[2]]).unwrap())
    });
    let (a, b8) = (&groups[0][..8], &groups[1][..10]);
    c.bench_function("rank_sum/exact 8 vs 10", |b| b.iter(|| wilcoxon_rank_sum(black_box(a), black_box(b8)).unwrap()));
}

criterion_group!(benches, force_model, engine, kinematics, statistics);
criterion_main!(benches);
