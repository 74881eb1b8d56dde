use std::fs;
use std::process::ExitCode;

use anyhow::{Context, Result};
use epidural_core::engine::record::{read_jsonl, to_jsonl};
use epidural_core::replay;

#[derive(clap::Args)]
pub struct Args {
    /// Record file, or a glob of them.
    #[arg(long = "in")]
    input: String,
    /// Fail unless the replayed record is byte-identical to the file.
    #[arg(long)]
    verify: bool,
}

pub fn run(args: Args) -> Result<ExitCode> {
    let paths = crate::analyze::expand(&args.input)?;
    if paths.is_empty() {
        eprintln!("error: no record files match `{}`", args.input);
        return Ok(ExitCode::from(crate::EXIT_NO_INPUT));
    }
    let mut diverged = 0;
    for path in &paths {
        let original = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let record = read_jsonl(original.as_slice()).with_context(|| format!("parsing {}", path.display()))?;
        let again = replay(&record).with_context(|| format!("replaying {}", path.display()))?;
        let text = to_jsonl(&again)?;
        let same = text.as_bytes() == original.as_slice();
        if args.verify && !same {
            diverged += 1;
            eprintln!("DIVERGED {}", path.display());
        } else {
            println!(
                "{} {}: {} samples, final depth {:.3} mm, {}{}",
                if same { "ok" } else { "changed" },
                path.display(),
                again.samples.len(),
                again.final_depth,
                again.outcome.kind.label(),
                if args.verify { " (verified)" } else { "" },
            );
        }
    }
    if diverged > 0 {
        eprintln!("{diverged} of {} records diverged on replay", paths.len());
        return Ok(ExitCode::from(crate::EXIT_DIVERGED));
    }
    Ok(ExitCode::SUCCESS)
}
