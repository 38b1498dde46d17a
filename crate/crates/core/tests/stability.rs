use proptest::prelude::*;
use rand::Rng;

use rc_core::harness::generators::Generator;
use rc_core::stability::{
    check_stability, for_each_combination, rate_formula, verify_equivalence_lemma, RateFamily, RateQuery,
    StabilityMode,
};
use rc_core::wasserstein::{sliced_w_p, SlicedOptions};
use rc_core::{Error, PointSet};

fn gaussian(n: usize, d: usize, seed: u64) -> PointSet {
    Generator::GaussianIsotropic { d, mean: None }
        .sample(n, &mut rc_core::rng::seeded(seed))
        .unwrap()
        .points
}

#[test]
fn four_point_example() {
    let s = PointSet::from_rows(&[vec![-1.0], vec![-1.0], vec![1.0], vec![1.0]]).unwrap();
    let r = check_stability(&s, &[0.0], 0.25, 1, StabilityMode::exhaustive()).unwrap();
    assert!((r.worst_mean_dev - 1.0 / 3.0).abs() < 1e-15);
    assert!(r.worst_second_moment_dev.abs() < 1e-15);
    assert!((r.implied_delta - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(r.mean_witness.len(), 1);
    assert!(r.exhaustive);
}

#[test]
fn no_removal_reduces_to_full_set() {
    let s = gaussian(10, 2, 1);
    let r = check_stability(&s, &[0.0, 0.0], 0.05, 1, StabilityMode::exhaustive()).unwrap();
    let mean = s.mean();
    assert!((r.worst_mean_dev - rc_core::linalg::norm(&mean)).abs() < 1e-12);
    assert!(r.mean_witness.is_empty());
}

#[test]
fn exhaustive_refuses_large_sets() {
    let s = gaussian(40, 2, 2);
    let res = check_stability(&s, &[0.0, 0.0], 0.1, 1, StabilityMode::exhaustive());
    assert!(matches!(res, Err(Error::WorkLimit(_))));
}

/// Naive enumeration: every subset with at most m removals, moments recomputed
/// from scratch.
fn naive_implied_delta(rows: &[Vec<f64>], eps: f64) -> f64 {
    let n = rows.len();
    let m = (eps * n as f64 + 1e-9).floor() as usize;
    let (mut mean_dev, mut second): (f64, f64) = (0.0, 0.0);
    for mask in 0u32..(1 << n) {
        let removed = n - mask.count_ones() as usize;
        if removed > m {
            continue;
        }
        let kept: Vec<&Vec<f64>> = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| &rows[i]).collect();
        let c = kept.len() as f64;
        let mx = kept.iter().map(|r| r[0]).sum::<f64>() / c;
        let my = kept.iter().map(|r| r[1]).sum::<f64>() / c;
        if removed == m {
            mean_dev = mean_dev.max((mx * mx + my * my).sqrt());
        }
        // k = d = 2: the only rank-2 projection is I, so the deviation is |tr - 2|.
        let tr = kept.iter().map(|r| r[0] * r[0] + r[1] * r[1]).sum::<f64>() / c;
        second = second.max((tr - 2.0).abs());
    }
    mean_dev.max((eps * second).sqrt())
}

#[test]
fn exhaustive_matches_naive_enumeration() {
    for seed in 0..5 {
        let s = gaussian(12, 2, 10 + seed);
        let fast = check_stability(&s, &[0.0, 0.0], 0.2, 2, StabilityMode::exhaustive()).unwrap();
        let slow = naive_implied_delta(&s.rows(), 0.2);
        assert!((fast.implied_delta - slow).abs() <= 1e-12 * slow, "{} vs {slow}", fast.implied_delta);
    }
}

#[test]
fn heuristic_tracks_exhaustive() {
    let mut rng = rc_core::rng::seeded(20);
    let (mut close, total) = (0, 200);
    for _ in 0..total {
        let n = rng.random_range(6..=14usize);
        let d = rng.random_range(1..=3usize);
        let k = rng.random_range(1..=d);
        let eps = rng.random_range(0.1..0.25);
        let s = gaussian(n, d, rng.random());
        let mu = vec![0.0; d];
        let exact = check_stability(&s, &mu, eps, k, StabilityMode::exhaustive()).unwrap().implied_delta;
        let heur = check_stability(&s, &mu, eps, k, StabilityMode::heuristic()).unwrap();
        assert!(!heur.exhaustive);
        assert!(heur.implied_delta <= exact * (1.0 + 1e-12), "{} > {exact}", heur.implied_delta);
        if heur.implied_delta >= 0.9 * exact {
            close += 1;
        }
    }
    assert!(close as f64 >= 0.9 * total as f64, "{close}/{total}");
}

#[test]
fn heuristic_on_large_gaussian() {
    let (n, d, eps) = (5000usize, 10usize, 0.05f64);
    let bound = 3.0 * (eps * (1.0 / eps).ln().sqrt() + (d as f64 / n as f64).sqrt());
    for seed in 0..20 {
        let s = gaussian(n, d, 100 + seed);
        let r = check_stability(&s, &vec![0.0; d], eps, 1, StabilityMode::heuristic()).unwrap();
        assert!(r.implied_delta <= bound, "seed {seed}: {} > {bound}", r.implied_delta);
    }
}

#[test]
fn heuristic_sees_far_outlier() {
    let (n, eps, dist) = (100usize, 0.01f64, 1000.0);
    let mut rows = gaussian(n, 3, 30).rows();
    rows[17] = vec![dist, 0.0, 0.0];
    let s = PointSet::from_rows(&rows).unwrap();
    let r = check_stability(&s, &[0.0; 3], eps, 1, StabilityMode::heuristic()).unwrap();
    assert!(r.implied_delta >= dist * eps * (1.0 - eps), "{}", r.implied_delta);
}

fn rate(family: RateFamily, eps: f64, n: Option<u64>, tau: f64) -> f64 {
    rate_formula(&RateQuery { family, epsilon: eps, n, d: 5, tau }, 0.2).unwrap()
}

#[test]
fn rate_formula_examples() {
    assert!((rate(RateFamily::Subgaussian, 0.01, None, 1.0) - 0.021460).abs() < 1e-6);
    assert_eq!(rate(RateFamily::Subgaussian, 0.0, None, 1.0), 0.0);
    assert!((rate(RateFamily::BoundedCovariance, 0.04, None, 1.0) - 0.2).abs() < 1e-12);
    let k4 = rate(RateFamily::BoundedKthMoment { order: 4, sigma: 1.0 }, 0.0625, None, 1.0);
    assert!((k4 - 0.125).abs() < 1e-12);
    // Finite n adds sqrt(d/n) + sqrt(log(1/tau)/n).
    let finite = rate(RateFamily::Subgaussian, 0.01, Some(500), 0.1);
    let expected = 0.01 * 100f64.ln().sqrt() + (5.0f64 / 500.0).sqrt() + (10f64.ln() / 500.0).sqrt();
    assert!((finite - expected).abs() < 1e-12);
}

#[test]
fn rate_formula_rejects_large_epsilon() {
    let q = RateQuery { family: RateFamily::Subgaussian, epsilon: 0.3, n: None, d: 2, tau: 1.0 };
    assert!(rate_formula(&q, 0.2).is_err());
}

#[test]
fn equivalence_on_isotropic_instance() {
    // Mean exactly 0 and second moment exactly I.
    let s = PointSet::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
    let rep = verify_equivalence_lemma(&s, &[0.0, 0.0], 0.25, 1, 22).unwrap();
    assert!((0.5..=2.0).contains(&rep.ratio_alt1), "{rep:?}");
    assert!((0.5..=2.0).contains(&rep.ratio_alt2), "{rep:?}");
}

#[test]
fn equivalence_ratios_bounded() {
    let mut rng = rc_core::rng::seeded(40);
    for _ in 0..100 {
        let n = rng.random_range(6..=12usize);
        let d = rng.random_range(1..=2usize);
        let eps = rng.random_range(0.1..0.3);
        let s = gaussian(n, d, rng.random());
        let rep = verify_equivalence_lemma(&s, &vec![0.0; d], eps, 1, 22).unwrap();
        for r in [rep.ratio_alt1, rep.ratio_alt2] {
            assert!((0.125..=8.0).contains(&r), "{rep:?}");
        }
    }
}

#[test]
fn combinations_are_counted() {
    let mut count = 0;
    for_each_combination(7, 3, |c| {
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        count += 1;
    });
    assert_eq!(count, 35);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn subsets_stay_stable(seed in any::<u64>(), n in 8usize..13, eps in 0.1f64..0.2) {
        let s = gaussian(n, 2, seed);
        let mu = [0.0, 0.0];
        let base = check_stability(&s, &mu, eps, 1, StabilityMode::exhaustive()).unwrap().implied_delta;
        let r = 2.0f64;
        let drop = (r * eps * n as f64 + 1e-9).floor() as usize;
        let keep: Vec<usize> = (drop..n).collect();
        let sub = check_stability(&s.subset(&keep), &mu, eps, 1, StabilityMode::exhaustive()).unwrap().implied_delta;
        prop_assert!(sub <= 8.0 * r.sqrt() * base);
    }

    #[test]
    fn rank_growth_bounded(seed in any::<u64>(), n in 8usize..13, eps in 0.1f64..0.25) {
        let s = gaussian(n, 3, seed);
        let mu = [0.0; 3];
        let one = check_stability(&s, &mu, eps, 1, StabilityMode::exhaustive()).unwrap().implied_delta;
        for k in 2..=3 {
            let dk = check_stability(&s, &mu, eps, k, StabilityMode::exhaustive()).unwrap().implied_delta;
            prop_assert!(dk <= 8.0 * (k as f64).sqrt() * one);
        }
    }

    #[test]
    fn subsets_are_wasserstein_close(seed in any::<u64>(), n in 8usize..13, eps in 0.1f64..0.25, k in 1usize..3) {
        let s = gaussian(n, 2, seed);
        let delta = check_stability(&s, &[0.0, 0.0], eps, k, StabilityMode::exhaustive()).unwrap().implied_delta;
        let drop = (eps * n as f64 + 1e-9).floor() as usize;
        let keep: Vec<usize> = (0..n - drop).collect();
        let b = sliced_w_p(&s, &s.subset(&keep), k, 1.0, SlicedOptions::default(), &mut rc_core::rng::seeded(seed)).unwrap();
        prop_assert!(b.lower <= 8.0 * (eps * (k as f64).sqrt() + delta));
    }
}
