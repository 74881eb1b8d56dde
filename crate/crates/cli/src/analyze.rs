use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use epidural_core::engine::record::{read_record, write_atomic};
use epidural_core::kinematics::{analyze_record, write_metrics_csv};
use epidural_core::{Error, PeakParams};
use rayon::prelude::*;

#[derive(clap::Args)]
pub struct Args {
    /// Glob of record files, e.g. 'records/*.jsonl'.
    #[arg(long = "in")]
    input: String,
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
    /// Minimum probe prominence, mm.
    #[arg(long, default_value_t = PeakParams::default().min_prominence)]
    prominence: f64,
    /// Minimum spacing between probes, ms.
    #[arg(long, default_value_t = PeakParams::default().min_separation * 1000.0)]
    separation: f64,
    /// Minimum probe height above the calibrated zero, mm.
    #[arg(long, default_value_t = PeakParams::default().min_height)]
    min_height: f64,
}

/// Sorted paths matching `pattern`.
pub fn expand(pattern: &str) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .with_context(|| format!("bad glob `{pattern}`"))?
        .collect::<std::result::Result<_, _>>()?;
    paths.retain(|p| p.is_file());
    paths.sort();
    Ok(paths)
}

pub fn run(args: Args) -> Result<ExitCode> {
    let paths = expand(&args.input)?;
    if paths.is_empty() {
        eprintln!("error: no record files match `{}`", args.input);
        return Ok(ExitCode::from(crate::EXIT_NO_INPUT));
    }
    let params = PeakParams {
        min_prominence: args.prominence,
        min_separation: args.separation / 1000.0,
        min_height: args.min_height,
    };
    let results: Vec<_> = paths
        .par_iter()
        .map(|p| {
            let record = read_record(p).with_context(|| format!("reading {}", p.display()))?;
            match analyze_record(&record, &params) {
                Ok(m) => Ok(Some(m)),
                // trials committed before touching the skin have no probing trace
                Err(Error::Analysis(msg)) => {
                    eprintln!("skipping {}: {msg}", p.display());
                    Ok(None)
                }
                Err(e) => Err(anyhow::Error::new(e).context(format!("analyzing {}", p.display()))),
            }
        })
        .collect();
    let rows: Vec<_> = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();

    let mut buf = Vec::new();
    write_metrics_csv(&rows, &mut buf)?;
    write_atomic(&args.out, &buf)?;
    println!("analyzed {} of {} records into {}", rows.len(), paths.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}
