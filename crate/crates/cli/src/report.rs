use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use epidural_core::kinematics::read_metrics_csv;
use epidural_core::stats::level::read_profiles_csv;
use epidural_core::stats::report::{study_report, write_report, DEFAULT_REPORT_SEED};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Bootstrap seed.
    #[arg(long, default_value_t = DEFAULT_REPORT_SEED)]
    seed: u64,
}

pub fn run(args: Args) -> Result<ExitCode> {
    let metrics = read_metrics_csv(
        fs::File::open(&args.metrics).with_context(|| format!("opening {}", args.metrics.display()))?,
    )
    .with_context(|| format!("reading {}", args.metrics.display()))?;
    let profiles = read_profiles_csv(
        fs::File::open(&args.profiles).with_context(|| format!("opening {}", args.profiles.display()))?,
    )
    .with_context(|| format!("reading {}", args.profiles.display()))?;

    let report = study_report(&metrics, &profiles, args.seed);
    for id in &report.unmatched {
        eprintln!("warning: participant {id} has no usable profile; left out of level analyses");
    }
    write_report(&report, &args.out)?;
    println!(
        "report for {} participants / {} test trials written to {}",
        report.n_participants,
        report.n_trials,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
