//! Percentile bootstrap confidence intervals.
//!
//! Resamples are drawn in fixed-size blocks, each from its own ChaCha
//! stream, so results do not depend on how blocks are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 10_000;
const BLOCK: usize = 1_000;

/// Linear-interpolated quantile of sorted data, `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `confidence`-level percentile interval of `statistic` over
/// `n_resamples` bootstrap resamples.
pub fn bootstrap_ci<F>(
    samples: &[f64],
    statistic: F,
    n_resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if samples.is_empty() {
        return Err(Error::Validation("bootstrap needs at least one sample".into()));
    }
    if n_resamples == 0 || !(0.0 < confidence && confidence < 1.0) {
        return Err(Error::Validation("invalid bootstrap settings".into()));
    }
    let n = samples.len();
    let blocks = n_resamples.div_ceil(BLOCK);
    let mut stats: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = BLOCK.min(n_resamples - b * BLOCK);
            let mut buf = vec![0.0; n];
            let statistic = &statistic;
            (0..count)
                .map(|_| {
                    for slot in buf.iter_mut() {
                        *slot = samples[rng.random_range(0..n)];
                    }
                    statistic(&buf)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    Ok((quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha)))
}

/// 95% interval of the mean with the default resample count.
pub fn bootstrap_mean_ci(samples: &[f64], seed: u64) -> Result<(f64, f64)> {
    bootstrap_ci(samples, mean, DEFAULT_RESAMPLES, 0.95, seed)
}
