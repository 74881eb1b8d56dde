use epidural_core::stats::bootstrap::{bootstrap_ci, bootstrap_mean_ci};
use epidural_core::stats::rank::{wilcoxon_rank_sum_with, wilcoxon_signed_rank_with, PMethod};
use epidural_core::{
    assign_level, bonferroni, kruskal_wallis, wilcoxon_rank_sum,
    wilcoxon_signed_rank, ParticipantProfile, Position,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Midrank by counting, O(n²).
fn naive_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let below = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn tail_p(observed: f64, dist: &[f64]) -> f64 {
    let eps = 1e-9;
    let lo = dist.iter().filter(|&&s| s <= observed + eps).count() as f64;
    let hi = dist.iter().filter(|&&s| s >= observed - eps).count() as f64;
    (2.0 * lo.min(hi) / dist.len() as f64).min(1.0)
}

/// Two-sided permutation p of the first sample's rank sum, by listing
/// every split of the pooled ranks.
fn rank_sum_enumerated(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = naive_ranks(&pooled);
    let n = pooled.len();
    let observed: f64 = ranks[..a.len()].iter().sum();
    let dist: Vec<f64> = (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == a.len())
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| ranks[i]).sum())
        .collect();
    tail_p(observed, &dist)
}

/// Two-sided p of W+ by listing every sign assignment.
fn signed_rank_enumerated(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
    if nz.is_empty() {
        return 1.0;
    }
    let ranks = naive_ranks(&nz.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let observed: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let n = nz.len();
    let dist: Vec<f64> = (0u32..1 << n)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| ranks[i]).sum())
        .collect();
    tail_p(observed, &dist)
}

fn sample(rng: &mut ChaCha8Rng, n: usize, tied: bool) -> Vec<f64> {
    (0..n)
        .map(|_| if tied { rng.random_range(0..5) as f64 } else { rng.random_range(-10.0..10.0) })
        .collect()
}

#[test]
fn rank_sum_exact_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n1 in 1..=8 {
        for n2 in 1..=8 {
            for tied in [false, true] {
                let a = sample(&mut rng, n1, tied);
                let b = sample(&mut rng, n2, tied);
                let got = wilcoxon_rank_sum_with(&a, &b, PMethod::Exact).unwrap().p_value;
                let want = rank_sum_enumerated(&a, &b);
                assert!((got - want).abs() < 1e-12, "{a:?} {b:?}: {got} vs {want}");
                assert_eq!(wilcoxon_rank_sum(&a, &b).unwrap().p_value, got);
            }
        }
    }
}

#[test]
fn signed_rank_exact_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 1..=8 {
        for tied in [false, true] {
            for _ in 0..5 {
                let d: Vec<f64> = sample(&mut rng, n, tied).iter().map(|x| x - 2.0).collect();
                let got = wilcoxon_signed_rank_with(&d, PMethod::Exact).unwrap().p_value;
                let want = signed_rank_enumerated(&d);
                assert!((got - want).abs() < 1e-12, "{d:?}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn kruskal_wallis_hand_computation() {
    let r = kruskal_wallis(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]).unwrap();
    // rank sums 6, 15, 24 over N = 9
    let h = 12.0 / (9.0 * 10.0) * (36.0 / 3.0 + 225.0 / 3.0 + 576.0 / 3.0) - 3.0 * 10.0;
    assert!((r.statistic - h).abs() < 1e-12);
    assert!((r.statistic - 7.2).abs() < 1e-12);
    assert_eq!(r.df, Some(2.0));
    // chi-square with two degrees of freedom has survival exp(-x/2)
    assert!((r.p_value - (-3.6f64).exp()).abs() < 1e-12);
}

#[test]
fn two_group_kruskal_wallis_is_squared_z() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let a = sample(&mut rng, 9, true);
        let b = sample(&mut rng, 12, true);
        let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
        if pooled.iter().all(|x| *x == pooled[0]) {
            continue;
        }
        let ranks = naive_ranks(&pooled);
        let (n1, n2) = (a.len() as f64, b.len() as f64);
        let n = n1 + n2;
        let w: f64 = ranks[..a.len()].iter().sum();
        let mean_r = (n + 1.0) / 2.0;
        let s2 = ranks.iter().map(|r| (r - mean_r).powi(2)).sum::<f64>() / (n - 1.0);
        let var_w = n1 * n2 / n * s2;
        let z2 = (w - n1 * mean_r).powi(2) / var_w;
        let h = kruskal_wallis(&[&a, &b]).unwrap().statistic;
        assert!((h - z2).abs() < 1e-9, "{h} vs {z2}");
    }
}

#[test]
fn monotone_transforms_change_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cube = |v: &[f64]| v.iter().map(|x| x * x * x).collect::<Vec<_>>();
    for i in 0..100 {
        let tied = i % 2 == 0;
        let sizes = [rng.random_range(2..15), rng.random_range(2..15), rng.random_range(2..15)];
        let g: Vec<Vec<f64>> = sizes.iter().map(|&n| sample(&mut rng, n, tied)).collect();
        let t: Vec<Vec<f64>> = g.iter().map(|v| cube(v)).collect();

        let kw = kruskal_wallis(&[&g[0], &g[1], &g[2]]).unwrap();
        let kw_t = kruskal_wallis(&[&t[0], &t[1], &t[2]]).unwrap();
        assert_eq!(kw, kw_t);
        assert_eq!(wilcoxon_rank_sum(&g[0], &g[1]).unwrap(), wilcoxon_rank_sum(&t[0], &t[1]).unwrap());
        let n = sizes[0].min(sizes[1]);
        let d: Vec<f64> = (0..n).map(|k| g[0][k] - g[1][k]).collect();
        assert_eq!(wilcoxon_signed_rank(&d).unwrap(), wilcoxon_signed_rank(&cube(&d)).unwrap());
    }
}

#[test]
fn normal_approximation_tracks_exact_for_moderate_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let a = sample(&mut rng, 10, false);
        let b: Vec<f64> = sample(&mut rng, 10, false).iter().map(|x| x + 3.0).collect();
        let exact = wilcoxon_rank_sum_with(&a, &b, PMethod::Exact).unwrap().p_value;
        let approx = wilcoxon_rank_sum_with(&a, &b, PMethod::Normal).unwrap().p_value;
        assert!((exact - approx).abs() < 0.02, "{exact} vs {approx}");
    }
}

/// Plain percentile bootstrap over an unrelated generator.
fn reference_bootstrap(x: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..x.len()).map(|_| x[(next() % x.len() as u64) as usize]).sum::<f64>() / x.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let pick = |q: f64| means[((q * resamples as f64) as usize).min(resamples - 1)];
    (pick(0.025), pick(0.975))
}

#[test]
fn bootstrap_agrees_with_reference() {
    let fixture = [
        3.1, 4.7, 2.2, 6.0, 5.5, 4.1, 3.9, 7.2, 2.8, 4.4, 5.1, 6.3, 3.3, 4.9, 5.8, 2.5, 4.0, 3.6, 6.7,
        5.0,
    ];
    let (lo, hi) = bootstrap_mean_ci(&fixture, 17).unwrap();
    let (rlo, rhi) = reference_bootstrap(&fixture, 200_000, 99);
    assert!((lo - rlo).abs() < 0.1 && (hi - rhi).abs() < 0.1, "({lo}, {hi}) vs ({rlo}, {rhi})");
    let m = fixture.iter().sum::<f64>() / fixture.len() as f64;
    assert!(lo < m && m < hi);
}

#[test]
fn bootstrap_support_bounds() {
    assert_eq!(bootstrap_mean_ci(&[5.0, 5.0, 5.0, 5.0], 0).unwrap(), (5.0, 5.0));
    let (lo, hi) = bootstrap_ci(&[0.0, 10.0], |v| v.iter().sum::<f64>() / v.len() as f64, 50_000, 0.95, 0)
        .unwrap();
    assert_eq!((lo, hi), (0.0, 10.0));
}

#[test]
fn level_table_rows_and_mixed_cases() {
    let cases = [
        (0.5, 30, Position::Resident, 1),
        (2.0, 100, Position::Unspecified, 2),
        (5.0, 400, Position::Attending, 3),
        (4.0, 100, Position::Attending, 3),
        (0.5, 400, Position::Attending, 2),
        (2.0, 400, Position::Resident, 2),
    ];
    for (years, n, pos, want) in cases {
        let p = ParticipantProfile::new("x", years, n, pos);
        assert_eq!(assign_level(&p).unwrap(), want, "{years} y, {n}, {pos:?}");
    }
}

fn position_rank(p: Position) -> u8 {
    match p {
        Position::Resident => 0,
        Position::Attending => 1,
        Position::Unspecified => unreachable!(),
    }
}

proptest! {
    #[test]
    fn bootstrap_stays_within_the_data(
        x in proptest::collection::vec(-50.0f64..50.0, 1..40),
        seed in any::<u64>(),
    ) {
        let (lo, hi) = bootstrap_ci(&x, |v| v.iter().sum::<f64>() / v.len() as f64, 500, 0.95, seed).unwrap();
        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min - 1e-9 <= lo && lo <= hi && hi <= max + 1e-9);
    }

    #[test]
    fn bonferroni_bounds(ps in proptest::collection::vec(0.0f64..=1.0, 1..10), m in 1usize..10) {
        let adj = bonferroni(&ps, m);
        for (p, a) in ps.iter().zip(&adj) {
            prop_assert!(*a >= *p && *a <= 1.0);
            prop_assert!(*a == 1.0 || (*a - p * m as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn level_never_drops_when_experience_grows(
        y1 in 0.0f64..10.0, dy in 0.0f64..10.0,
        e1 in 0u32..800, de in 0u32..800,
        p1 in prop_oneof![Just(Position::Resident), Just(Position::Attending)],
        promote in any::<bool>(),
    ) {
        let p2 = if promote { Position::Attending } else { p1 };
        prop_assume!(position_rank(p2) >= position_rank(p1));
        let a = assign_level(&ParticipantProfile::new("a", y1, e1, p1)).unwrap();
        let b = assign_level(&ParticipantProfile::new("b", y1 + dy, e1 + de, p2)).unwrap();
        prop_assert!(b >= a);
    }
}

// Reference values from scipy.stats (kruskal; mannwhitneyu asymptotic with
// continuity correction; wilcoxon approx with correction).
#[test]
fn large_sample_tests_match_scipy() {
    let a = [1.2, 3.4, 2.2, 5.1, 4.4, 2.2, 6.0, 3.3, 1.9, 4.8, 5.5, 2.7];
    let b = [4.1, 6.2, 5.5, 7.3, 3.9, 6.8, 5.5, 8.1, 4.7, 6.6, 7.7];
    let c = [2.0, 2.2, 3.1, 4.4, 1.5, 2.9, 3.6, 2.2, 0.8, 3.3];
    let kw = kruskal_wallis(&[&a, &b, &c]).unwrap();
    assert!((kw.statistic - 16.715833942643595).abs() < 1e-9);
    assert!((kw.p_value - 0.00023453236294128686).abs() < 1e-9);

    let rs = wilcoxon_rank_sum(&a, &b).unwrap();
    assert_eq!(rs.statistic, 17.0);
    assert!((rs.p_value - 0.0028020148414729922).abs() < 1e-9);

    let d = [
        -2.8999999999999995, -2.8000000000000003, -3.3, -2.2, 0.5000000000000004, -4.6, 0.5, -4.8,
        -2.8000000000000003, -1.7999999999999998, -2.2, 0.0, 1.3, -0.4, 2.2,
    ];
    let sr = wilcoxon_signed_rank(&d).unwrap();
    assert_eq!(sr.statistic, 16.0);
    assert!((sr.p_value - 0.023651616655355978).abs() < 1e-9);
}
