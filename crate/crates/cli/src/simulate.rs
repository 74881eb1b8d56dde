use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use epidural_core::engine::record::{write_atomic, write_record};
use epidural_core::engine::simulate_trial;
use epidural_core::stats::level::{read_profiles_csv, write_profiles_csv};
use epidural_core::{generate_schedule, AgentProfile, ParticipantProfile, Position, SessionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PARTICIPANTS_FILE: &str = "participants.csv";

#[derive(clap::Args)]
pub struct Args {
    /// novice, intermediate or expert
    #[arg(long)]
    profile: String,
    /// Test body masses in kg; each block uses every mass once.
    #[arg(long, value_delimiter = ',', default_values_t = [55.0, 85.0, 115.0])]
    mass: Vec<f64>,
    /// Test trials per session; a multiple of the number of masses.
    #[arg(long, default_value_t = 12)]
    trials: usize,
    /// Familiarization trials (at the average mass) before the test trials.
    #[arg(long, default_value_t = 0)]
    familiarization: usize,
    #[arg(long, default_value_t = 1)]
    sessions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to $EPIDURAL_RECORD_DIR or ./records.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Questionnaire answers a scripted trainee of each profile would give.
fn synthetic_profile(id: &str, profile: &str) -> ParticipantProfile {
    let (years, epidurals, position) = match profile {
        "novice" => (0.5, 20, Position::Resident),
        "intermediate" => (2.0, 150, Position::Unspecified),
        _ => (8.0, 900, Position::Attending),
    };
    ParticipantProfile::new(id, years, epidurals, position)
}

fn merge_participants(dir: &Path, new: Vec<ParticipantProfile>) -> Result<()> {
    let path = dir.join(PARTICIPANTS_FILE);
    let mut all: BTreeMap<String, ParticipantProfile> = BTreeMap::new();
    if path.exists() {
        let existing = read_profiles_csv(fs::File::open(&path)?)
            .with_context(|| format!("reading {}", path.display()))?;
        all.extend(existing.into_iter().map(|p| (p.id.clone(), p)));
    }
    all.extend(new.into_iter().map(|p| (p.id.clone(), p)));
    let mut buf = Vec::new();
    write_profiles_csv(&all.into_values().collect::<Vec<_>>(), &mut buf)?;
    write_atomic(&path, &buf)?;
    Ok(())
}

pub fn run(args: Args) -> Result<ExitCode> {
    let Some(agent) = AgentProfile::by_name(&args.profile) else {
        bail!("unknown profile `{}` (expected novice, intermediate or expert)", args.profile);
    };
    if args.mass.is_empty() || !args.trials.is_multiple_of(args.mass.len()) {
        bail!("--trials ({}) must be a multiple of the number of masses ({})", args.trials, args.mass.len());
    }
    let out = args.out.unwrap_or_else(crate::default_record_dir);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut participants = Vec::new();
    let mut written = 0;
    for session in 0..args.sessions {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        rng.set_stream(session as u64);
        let config = SessionConfig {
            n_familiarization: args.familiarization,
            test_masses: args.mass.clone(),
            blocks: args.trials / args.mass.len(),
            rng_seed: rng.random(),
            ..SessionConfig::default()
        };
        let id = format!("{}-s{}-{:03}", args.profile, args.seed, session);
        for scheduled in generate_schedule(&config)? {
            let record = simulate_trial(&agent, &id, scheduled, config.feedback_in_familiarization, rng.random())?;
            write_record(&out, &record)?;
            written += 1;
        }
        participants.push(synthetic_profile(&id, &args.profile));
    }
    merge_participants(&out, participants)?;
    println!("wrote {written} records to {}", out.display());
    Ok(ExitCode::SUCCESS)
}
