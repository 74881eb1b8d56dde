//! Rank-based tests: Kruskal-Wallis, Wilcoxon rank-sum and signed-rank.
//!
//! Ties get midranks and the usual variance correction. Exact p-values are
//! computed from the permutation distribution of doubled (hence integral)
//! midranks, so they stay exact in the presence of ties.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const RANK_SUM_EXACT_MAX_N: usize = 10;
pub const SIGNED_RANK_EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub group_a: String,
    pub group_b: String,
    pub statistic: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub test: String,
    pub statistic: f64,
    pub df: Option<f64>,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub post_hoc: Option<Vec<PairwiseComparison>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMethod {
    /// Exact for small samples, normal approximation otherwise.
    Auto,
    Exact,
    Normal,
}

/// Midranks (1-based) and the sizes of tie groups.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn two_sided_normal(deviation: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return 1.0;
    }
    let z = (deviation.abs() - 0.5).max(0.0) / sd;
    (2.0 * std_normal().cdf(-z)).min(1.0)
}

fn two_sided_exact(counts: &[u64], observed: usize) -> f64 {
    let total: u64 = counts.iter().sum();
    let lower: u64 = counts[..=observed].iter().sum();
    let upper: u64 = counts[observed..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} contains non-finite values")))
    }
}

pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<StatResult> {
    if groups.len() < 2 {
        return Err(Error::Validation("Kruskal-Wallis needs at least two groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::Validation("Kruskal-Wallis groups must be non-empty".into()));
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    check_finite(&pooled, "group data")?;
    let n = pooled.len() as f64;
    let (ranks, ties) = midranks(&pooled);
    let mut offset = 0;
    let mut sum_sq = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum_sq += r * r / g.len() as f64;
        offset += g.len();
    }
    let df = (groups.len() - 1) as f64;
    let correction = 1.0 - tie_sum(&ties) / (n * n * n - n);
    let (h, p) = if correction <= 0.0 {
        (0.0, 1.0)
    } else {
        let h = ((12.0 / (n * (n + 1.0)) * sum_sq - 3.0 * (n + 1.0)) / correction).max(0.0);
        let chi = ChiSquared::new(df).expect("df > 0");
        (h, chi.sf(h).clamp(0.0, 1.0))
    };
    Ok(StatResult { test: "kruskal-wallis".into(), statistic: h, df: Some(df), p_value: p, post_hoc: None })
}

/// Counts of size-`k` subsets of `weights` by weight sum.
fn subset_sum_counts(weights: &[usize], k: usize) -> Vec<u64> {
    let max: usize = weights.iter().sum();
    // table[j][s]: subsets of size j with sum s
    let mut table = vec![vec![0u64; max + 1]; k + 1];
    table[0][0] = 1;
    for &w in weights {
        for j in (1..=k).rev() {
            for s in (w..=max).rev() {
                table[j][s] += table[j - 1][s - w];
            }
        }
    }
    table.swap_remove(k)
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) test of `a` against `b`.
/// The statistic is U for `a`.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<StatResult> {
    wilcoxon_rank_sum_with(a, b, PMethod::Auto)
}

pub fn wilcoxon_rank_sum_with(a: &[f64], b: &[f64], method: PMethod) -> Result<StatResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Validation("rank-sum samples must be non-empty".into()));
    }
    check_finite(a, "sample a")?;
    check_finite(b, "sample b")?;
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let w: f64 = ranks[..n1].iter().sum();
    let u = w - (n1 * (n1 + 1)) as f64 / 2.0;

    let exact = match method {
        PMethod::Exact => true,
        PMethod::Normal => false,
        PMethod::Auto => n1 <= RANK_SUM_EXACT_MAX_N && n2 <= RANK_SUM_EXACT_MAX_N,
    };
    let p = if exact {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = subset_sum_counts(&doubled, n1);
        two_sided_exact(&counts, (2.0 * w).round() as usize)
    } else {
        let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
        let mean = n1f * (nf + 1.0) / 2.0;
        let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_sum(&ties) / (nf * (nf - 1.0)));
        two_sided_normal(w - mean, var.max(0.0).sqrt())
    };
    Ok(StatResult {
        test: "wilcoxon-rank-sum".into(),
        statistic: u,
        df: None,
        p_value: p,
        post_hoc: None,
    })
}

/// Two-sided Wilcoxon signed-rank test on paired differences. Zero
/// differences are dropped. The statistic is min(W+, W-).
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<StatResult> {
    wilcoxon_signed_rank_with(diffs, PMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(diffs: &[f64], method: PMethod) -> Result<StatResult> {
    check_finite(diffs, "differences")?;
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nz.len();
    let result = |stat: f64, p: f64| StatResult {
        test: "wilcoxon-signed-rank".into(),
        statistic: stat,
        df: None,
        p_value: p,
        post_hoc: None,
    };
    if n == 0 {
        return Ok(result(0.0, 1.0));
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    // fold from +0.0: an empty f64 sum is -0.0
    let w_plus = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).fold(0.0, |acc, (_, r)| acc + r);
    let total = (n * (n + 1)) as f64 / 2.0;
    let stat = w_plus.min(total - w_plus);

    let exact = match method {
        PMethod::Exact => true,
        PMethod::Normal => false,
        PMethod::Auto => n <= SIGNED_RANK_EXACT_MAX_N,
    };
    let p = if exact {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0u64; max + 1];
        counts[0] = 1;
        for &w in &doubled {
            for s in (w..=max).rev() {
                counts[s] += counts[s - w];
            }
        }
        two_sided_exact(&counts, (2.0 * w_plus).round() as usize)
    } else {
        let nf = n as f64;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0;
        two_sided_normal(w_plus - total / 2.0, var.max(0.0).sqrt())
    };
    Ok(result(stat, p))
}

/// Bonferroni adjustment for `m` comparisons: `min(1, p * m)`.
pub fn bonferroni(ps: &[f64], m: usize) -> Vec<f64> {
    ps.iter().map(|p| (p * m as f64).min(1.0)).collect()
}

/// All pairwise rank-sum tests between named groups, Bonferroni-adjusted
/// over the number of pairs.
pub fn pairwise_rank_sum(groups: &[(String, Vec<f64>)]) -> Result<Vec<PairwiseComparison>> {
    let mut raw = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let r = wilcoxon_rank_sum(&groups[i].1, &groups[j].1)?;
            raw.push((i, j, r.statistic, r.p_value));
        }
    }
    let adjusted = bonferroni(&raw.iter().map(|r| r.3).collect::<Vec<_>>(), raw.len());
    Ok(raw
        .into_iter()
        .zip(adjusted)
        .map(|((i, j, stat, p), adj)| PairwiseComparison {
            group_a: groups[i].0.clone(),
            group_b: groups[j].0.clone(),
            statistic: stat,
            p_raw: p,
            p_adjusted: adj,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midrank_ties() {
        let (r, t) = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, vec![2]);
    }

    #[test]
    fn kw_identical_groups() {
        let g = [1.0, 2.0, 3.0];
        let r = kruskal_wallis(&[&g, &g, &g]).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let flat = [5.0, 5.0];
        let r = kruskal_wallis(&[&flat, &flat]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn kw_rejects_empty() {
        assert!(kruskal_wallis(&[&[1.0], &[]]).is_err());
        assert!(kruskal_wallis(&[&[1.0]]).is_err());
    }

    #[test]
    fn rank_sum_examples() {
        let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.1).abs() < 1e-15);
        let same = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn signed_rank_examples() {
        assert_eq!(wilcoxon_signed_rank(&[0.0, 0.0]).unwrap().p_value, 1.0);
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.25).abs() < 1e-15);
        assert_eq!(wilcoxon_signed_rank(&[-1.0, 1.0]).unwrap().p_value, 1.0);
        let neg = wilcoxon_signed_rank(&[-1.0, -2.0]).unwrap();
        assert_eq!(neg.statistic.to_string(), "0");
    }

    #[test]
    fn bonferroni_caps() {
        assert_eq!(bonferroni(&[0.02, 0.5], 3), vec![0.06, 1.0]);
    }

    #[test]
    fn normal_branch_is_close_to_exact_for_moderate_n() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..10).map(|i| i as f64 + 4.5).collect();
        let e = wilcoxon_rank_sum_with(&a, &b, PMethod::Exact).unwrap().p_value;
        let n = wilcoxon_rank_sum_with(&a, &b, PMethod::Normal).unwrap().p_value;
        assert!((e - n).abs() < 0.01, "{e} vs {n}");
    }
}
