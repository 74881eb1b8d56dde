use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod analyze;
mod replay;
mod report;
mod serve;
mod simulate;

/// Environment variable holding the default record directory.
pub const RECORD_DIR_ENV: &str = "EPIDURAL_RECORD_DIR";

/// Exit status for inputs that matched nothing.
pub const EXIT_NO_INPUT: u8 = 2;
/// Exit status for a replay that did not reproduce its record.
pub const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "epidural", version, about = "Epidural insertion simulator: batch tools and live session server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scripted trainees through seeded sessions and write their records.
    Simulate(simulate::Args),
    /// Compute per-trial metrics from record files.
    Analyze(analyze::Args),
    /// Group statistics from a metrics table and participant profiles.
    Report(report::Args),
    /// Host live sessions over WebSocket.
    Serve(serve::Args),
    /// Re-run recorded position streams through the engine.
    Replay(replay::Args),
}

fn default_record_dir() -> PathBuf {
    std::env::var_os(RECORD_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("records"))
}

fn main() -> ExitCode {
    // clap would exit 2 on usage errors, which is reserved for empty input
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Analyze(a) => analyze::run(a),
        Command::Report(a) => report::run(a),
        Command::Serve(a) => serve::run(a),
        Command::Replay(a) => replay::run(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
