use proptest::prelude::*;

use rc_core::adversaries::{
    certify_local_budget, contaminate, inject_global, perturb_local, ContaminationRecipe, GlobalStrategy,
    LocalStrategy,
};
use rc_core::harness::generators::Generator;
use rc_core::linalg;
use rc_core::{Label, PointSet};

fn gaussian(n: usize, d: usize, seed: u64) -> PointSet {
    Generator::GaussianIsotropic { d, mean: None }
        .sample(n, &mut rc_core::rng::seeded(seed))
        .unwrap()
        .points
}

fn all_strategies(d: usize) -> Vec<LocalStrategy> {
    let mut basis = vec![vec![0.0; d]; 2.min(d)];
    for (i, b) in basis.iter_mut().enumerate() {
        b[i] = 1.0;
    }
    vec![
        LocalStrategy::CommonShift { direction: None },
        LocalStrategy::PairBlowup { direction: None },
        LocalStrategy::RandomGaussianScaled,
        LocalStrategy::SubspaceShift { basis },
    ]
}

/// E|v.u| for u uniform on the unit sphere of R^d and a fixed unit v.
fn sphere_abs_mean(d: usize) -> f64 {
    let mut c = if d % 2 == 1 { 1.0 } else { 2.0 / std::f64::consts::PI };
    let mut m = if d % 2 == 1 { 1 } else { 2 };
    while m < d {
        c *= m as f64 / (m + 1) as f64;
        m += 2;
    }
    c
}

#[test]
fn zero_budget_changes_nothing() {
    let s0 = gaussian(30, 4, 1);
    for strategy in all_strategies(4) {
        let (s, p) = perturb_local(&s0, 0.0, 2, &strategy, &mut rc_core::rng::seeded(2), None).unwrap();
        assert_eq!(s.data(), s0.data());
        assert!(p.deltas.iter().flatten().all(|&x| x == 0.0));
    }
}

#[test]
fn common_shift_is_identical_and_tight() {
    let s0 = gaussian(10, 3, 3);
    let v = vec![0.0, 0.6, 0.8];
    let strategy = LocalStrategy::CommonShift { direction: Some(v.clone()) };
    let (s, p) = perturb_local(&s0, 0.3, 1, &strategy, &mut rc_core::rng::seeded(4), None).unwrap();
    for dl in &p.deltas {
        for (a, b) in dl.iter().zip(&v) {
            assert!((a - 0.3 * b).abs() < 1e-15);
        }
    }
    let mut rng = rc_core::rng::seeded(5);
    let (lower, witness) = certify_local_budget(&s0, &s, 1, 20, 50, &mut rng).unwrap();
    assert!((0.3 - 1e-6..=0.3 + 1e-12).contains(&lower));
    let along = linalg::quad_form(&witness.matrix, &v);
    assert!((along - 1.0).abs() < 1e-6);
}

#[test]
fn pair_blowup_matches_worked_example() {
    let n = 100;
    let s0 = PointSet::new(2, vec![0.0; 2 * n]).unwrap();
    let strategy = LocalStrategy::PairBlowup { direction: Some(vec![1.0, 0.0]) };
    let (s, p) = perturb_local(&s0, 1.0, 1, &strategy, &mut rc_core::rng::seeded(6), None).unwrap();
    assert_eq!(p.deltas[0], vec![50.0, 0.0]);
    assert_eq!(p.deltas[1], vec![-50.0, 0.0]);
    assert!(p.deltas[2..].iter().flatten().all(|&x| x == 0.0));
    // Variance along v goes from 0 to (50^2 + 50^2) / n = 0.5 rho^2 n.
    let m = linalg::moment_summary(&s, None).unwrap();
    assert!((m.covariance[(0, 0)] - 50.0).abs() < 1e-12);
    let (lower, _) = certify_local_budget(&s0, &s, 1, 20, 50, &mut rc_core::rng::seeded(7)).unwrap();
    assert!((lower - 1.0).abs() <= 0.01);
}

#[test]
fn certify_identical_sets_is_zero() {
    let s0 = gaussian(20, 3, 8);
    let (lower, _) = certify_local_budget(&s0, &s0, 2, 3, 10, &mut rc_core::rng::seeded(9)).unwrap();
    assert_eq!(lower, 0.0);
}

#[test]
fn certify_rejects_size_mismatch() {
    let (a, b) = (gaussian(5, 2, 1), gaussian(6, 2, 1));
    assert!(certify_local_budget(&a, &b, 1, 1, 5, &mut rc_core::rng::seeded(0)).is_err());
}

#[test]
fn perturb_rejects_negative_budget() {
    let s0 = gaussian(5, 2, 1);
    let strategy = LocalStrategy::CommonShift { direction: None };
    assert!(perturb_local(&s0, -0.1, 1, &strategy, &mut rc_core::rng::seeded(0), None).is_err());
}

#[test]
fn global_examples() {
    let s = gaussian(10, 2, 10);
    let same = inject_global(&s, 0.0, &GlobalStrategy::ResampleIsotropic { scale: 3.0 }, &mut rc_core::rng::seeded(1))
        .unwrap();
    assert_eq!(same.data(), s.data());

    let t = inject_global(&s, 0.25, &GlobalStrategy::ResampleIsotropic { scale: 3.0 }, &mut rc_core::rng::seeded(1))
        .unwrap();
    let replaced = (0..10).filter(|&i| t.label(i) == Some(Label::Outlier)).count();
    let untouched = (0..10).filter(|&i| t.point(i) == s.point(i)).count();
    assert_eq!(replaced, 2);
    assert_eq!(untouched, 8);
}

#[test]
fn cluster_displaces_mean() {
    let s = gaussian(1000, 3, 11);
    let t = inject_global(
        &s,
        0.1,
        &GlobalStrategy::Cluster { direction: Some(vec![0.0, 0.0, 1.0]), radius: 100.0 },
        &mut rc_core::rng::seeded(2),
    )
    .unwrap();
    let outliers: Vec<usize> = (0..1000).filter(|&i| t.label(i) == Some(Label::Outlier)).collect();
    assert_eq!(outliers.len(), 100);
    let shift = t.mean()[2] - s.mean()[2];
    assert!((shift - 10.0).abs() < 0.5, "shift {shift}");
}

#[test]
fn contamination_is_deterministic() {
    let s0 = gaussian(200, 4, 12);
    let recipe = ContaminationRecipe {
        epsilon: 0.1,
        rho: 0.2,
        k: 2,
        local_strategy: LocalStrategy::RandomGaussianScaled,
        global_strategy: GlobalStrategy::Antipodal { direction: None, radius: 20.0 },
        seed: 99,
    };
    let (a, _) = contaminate(&s0, &recipe).unwrap();
    let (b, _) = contaminate(&s0, &recipe).unwrap();
    assert_eq!(a, b);
}

#[test]
fn recipe_json_round_trip() {
    let text = r#"{"epsilon":0.1,"rho":0.05,"k":1,
        "local_strategy":{"name":"common_shift","params":{"direction":[1,0]}},
        "global_strategy":{"name":"cluster","params":{"radius":100}},"seed":3}"#;
    let recipe: ContaminationRecipe = serde_json::from_str(text).unwrap();
    assert_eq!(recipe.global_strategy, GlobalStrategy::Cluster { direction: None, radius: 100.0 });
    let back: ContaminationRecipe = serde_json::from_str(&serde_json::to_string(&recipe).unwrap()).unwrap();
    assert_eq!(back, recipe);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_budgets_hold(seed in any::<u64>(), d in 2usize..6, rho in 0.0f64..2.0, which in 0usize..4) {
        let s0 = gaussian(40, d, seed);
        let k = 1 + (seed as usize % d);
        let strategy = all_strategies(d)[which].clone();
        let mut rng = rc_core::rng::seeded(seed ^ 1);
        let (s, _) = perturb_local(&s0, rho, k, &strategy, &mut rng, None).unwrap();
        let (lower, _) = certify_local_budget(&s0, &s, k, 4, 40, &mut rng).unwrap();
        prop_assert!(lower <= rho * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn budget_grows_with_rank(seed in any::<u64>(), d in 2usize..6, which in 0usize..4) {
        let s0 = gaussian(40, d, seed);
        let strategy = all_strategies(d)[which].clone();
        let mut rng = rc_core::rng::seeded(seed ^ 2);
        let (s, _) = perturb_local(&s0, 1.0, 1, &strategy, &mut rng, None).unwrap();
        let values: Vec<f64> = (1..=d)
            .map(|k| certify_local_budget(&s0, &s, k, 4, 40, &mut rng).unwrap().0)
            .collect();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1] + 1e-9), "{values:?}");
    }

    /// For Delta spread uniformly over the sphere the Euclidean average exceeds
    /// the one-direction budget by 1 / E|v.u| (about sqrt(pi d / 2)), more than
    /// sqrt d; the strategies other than the isotropic one respect sqrt d.
    #[test]
    fn euclidean_average_sandwich(seed in any::<u64>(), d in 2usize..6, which in 0usize..4) {
        let s0 = gaussian(40, d, seed);
        let strategy = all_strategies(d)[which].clone();
        let mut rng = rc_core::rng::seeded(seed ^ 3);
        let (s, _) = perturb_local(&s0, 1.0, 1, &strategy, &mut rng, None).unwrap();
        let (weak, _) = certify_local_budget(&s0, &s, d, 1, 5, &mut rng).unwrap();
        let (strong, _) = certify_local_budget(&s0, &s, 1, 8, 60, &mut rng).unwrap();
        let factor = if which == 2 { 1.0 / sphere_abs_mean(d) } else { (d as f64).sqrt() };
        prop_assert!(weak <= factor * strong + 1e-9, "weak {weak}, strong {strong}, d {d}");
    }

    #[test]
    fn injection_replaces_exact_count(seed in any::<u64>(), n in 1usize..200, eps in 0.0f64..0.49) {
        let s = gaussian(n, 2, seed);
        let t = inject_global(&s, eps, &GlobalStrategy::ResampleIsotropic { scale: 2.0 }, &mut rc_core::rng::seeded(seed)).unwrap();
        let m = (eps * n as f64 + 1e-9).floor() as usize;
        prop_assert_eq!(t.len(), n);
        prop_assert_eq!((0..n).filter(|&i| t.label(i) == Some(Label::Outlier)).count(), m);
        prop_assert!((0..n).filter(|&i| t.point(i) == s.point(i)).count() >= n - m);
    }
}
