//! Self-verification suites run by `rc verify`.
//!
//! Every suite runs on frozen pseudo-random inputs, needs no network or data
//! files, and finishes in seconds. A suite fails if any of its checks fails.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adversaries::{
    certify_local_budget, contaminate, perturb_local, ContaminationRecipe, GlobalStrategy, LocalStrategy,
};
use crate::certificates::{capped_min, round_weights, solve_saddle, sup_relaxed_avg_norm, SaddleOptions};
use crate::error::Result;
use crate::filter::{estimate_mean, run_filter, FilterParams};
use crate::linalg;
use crate::pca::{pca_error, robust_pca, Centering, PcaParams};
use crate::rng::seeded;
use crate::stability::{check_stability, rate_formula, RateFamily, RateQuery, StabilityMode};
use crate::types::{AlgoConstants, Label, PointSet};
use crate::wasserstein::{self, assignment::solve_assignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Core,
    Adversaries,
    Stability,
    Saddle,
    Filter,
    Wasserstein,
    Pca,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Core,
        Suite::Adversaries,
        Suite::Stability,
        Suite::Saddle,
        Suite::Filter,
        Suite::Wasserstein,
        Suite::Pca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Core => "core",
            Suite::Adversaries => "adversaries",
            Suite::Stability => "stability",
            Suite::Saddle => "saddle",
            Suite::Filter => "filter",
            Suite::Wasserstein => "wasserstein",
            Suite::Pca => "pca",
        }
    }

    /// Parses a suite name; `all` expands to every suite.
    pub fn parse_list(name: &str) -> Option<Vec<Suite>> {
        if name == "all" {
            return Some(Suite::ALL.to_vec());
        }
        Suite::ALL.iter().find(|s| s.name() == name).map(|s| vec![*s])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Checks(Vec<Check>);

impl Checks {
    fn add(&mut self, name: &str, outcome: Result<(bool, String)>) {
        let (passed, detail) = match outcome {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        self.0.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }
}

pub fn run_suite(suite: Suite) -> SuiteReport {
    let mut c = Checks(Vec::new());
    match suite {
        Suite::Core => core_suite(&mut c),
        Suite::Adversaries => adversaries_suite(&mut c),
        Suite::Stability => stability_suite(&mut c),
        Suite::Saddle => saddle_suite(&mut c),
        Suite::Filter => filter_suite(&mut c),
        Suite::Wasserstein => wasserstein_suite(&mut c),
        Suite::Pca => pca_suite(&mut c),
    }
    SuiteReport { suite, checks: c.0 }
}

fn gaussian_set(n: usize, d: usize, rng: &mut ChaCha8Rng) -> PointSet {
    let data: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    PointSet::new(d, data).expect("n*d values")
}

fn core_suite(c: &mut Checks) {
    c.add("top_k_budget diag(3,2,1)", (|| {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let (v, p) = linalg::top_k_budget(&a, 2)?;
        p.validate(1e-9)?;
        Ok(((v - 5.0).abs() < 1e-12, format!("value {v}")))
    })());
    c.add("signed extreme diag(1,-4)", (|| {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -4.0]));
        let v = linalg::signed_extreme_budget(&a, 1)?;
        Ok(((v - 4.0).abs() < 1e-12, format!("value {v}")))
    })());
    c.add("binary and csv round trip", (|| {
        let mut rng = seeded(1);
        let s = gaussian_set(17, 3, &mut rng).with_labels(vec![Label::Inlier; 17])?;
        let mut buf = Vec::new();
        crate::io::write_binary(&s, &mut buf)?;
        let b = crate::io::read_binary(buf.as_slice())?;
        let mut text = Vec::new();
        crate::io::write_csv(&s, &mut text)?;
        let t = crate::io::read_csv(text.as_slice())?;
        let ok = b.data() == s.data() && t.data() == s.data() && t.labels() == s.labels();
        Ok((ok, "17 x 3".into()))
    })());
    c.add("capped simplex projection feasible", {
        let mut rng = seeded(2);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let n = rng.random_range(2..30);
            let cap = 1.0 / (0.8 * n as f64);
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let w = linalg::project_capped_simplex(&v, cap, 1.0);
            let s: f64 = w.iter().sum();
            worst = worst.max((s - 1.0).abs());
            for x in &w {
                worst = worst.max((-x).max(x - cap).max(0.0));
            }
        }
        Ok((worst < 1e-9, format!("max violation {worst:.2e}")))
    });
}

fn adversaries_suite(c: &mut Checks) {
    let strategies = [
        ("common_shift", LocalStrategy::CommonShift { direction: None }),
        ("pair_blowup", LocalStrategy::PairBlowup { direction: None }),
        ("random_gaussian_scaled", LocalStrategy::RandomGaussianScaled),
        ("subspace_shift", LocalStrategy::SubspaceShift {
                basis: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]],
            }),
    ];
    for (name, strat) in strategies {
        c.add(&format!("{name} within budget"), (|| {
            let mut rng = seeded(3);
            let mut worst = 0.0f64;
            for k in 1..=2 {
                let s0 = gaussian_set(120, 4, &mut rng);
                let (s, pert) = perturb_local(&s0, 0.3, k, &strat, &mut rng, None)?;
                let (lower, _) = certify_local_budget(&s0, &s, k, 4, 40, &mut rng)?;
                worst = worst.max(lower / 0.3);
                if pert.constructed_bound > 0.3 * (1.0 + 1e-9) {
                    return Ok((false, format!("constructed bound {}", pert.constructed_bound)));
                }
            }
            Ok((worst <= 1.0 + 1e-9, format!("certified/rho {worst:.4}")))
        })());
    }
    c.add("global injection replaces floor(eps n)", (|| {
        let s0 = gaussian_set(203, 3, &mut seeded(4));
        let recipe = ContaminationRecipe {
            epsilon: 0.1,
            rho: 0.0,
            k: 1,
            local_strategy: LocalStrategy::None,
            global_strategy: GlobalStrategy::Cluster {
                direction: None,
                radius: 10.0,
            },
            seed: 4,
        };
        let (t, _) = contaminate(&s0, &recipe)?;
        let out = t.labels().map_or(0, |l| l.iter().filter(|&&x| x == Label::Outlier).count());
        Ok((out == 20, format!("{out} outliers")))
    })());
    c.add("contamination is seed-deterministic", (|| {
        let s0 = gaussian_set(50, 2, &mut seeded(5));
        let recipe = ContaminationRecipe {
            epsilon: 0.1,
            rho: 0.2,
            k: 1,
            local_strategy: LocalStrategy::RandomGaussianScaled,
            global_strategy: GlobalStrategy::ResampleIsotropic { scale: 3.0 },
            seed: 9,
        };
        let (a, _) = contaminate(&s0, &recipe)?;
        let (b, _) = contaminate(&s0, &recipe)?;
        Ok((a == b, String::new()))
    })());
}

fn stability_suite(c: &mut Checks) {
    c.add("four-point 1-D example", (|| {
        let s = PointSet::new(1, vec![-1.0, -1.0, 1.0, 1.0])?;
        let r = check_stability(&s, &[0.0], 0.25, 1, StabilityMode::exhaustive())?;
        let ok = (r.worst_mean_dev - 1.0 / 3.0).abs() < 1e-12 && r.worst_second_moment_dev.abs() < 1e-12;
        Ok((ok, format!("mean {} second {}", r.worst_mean_dev, r.worst_second_moment_dev)))
    })());
    c.add("heuristic never exceeds exhaustive", (|| {
        let mut rng = seeded(6);
        let mut bad = 0;
        for _ in 0..40 {
            let n = rng.random_range(6..=12);
            let d = rng.random_range(1..=3);
            let s = gaussian_set(n, d, &mut rng);
            let mu = vec![0.0; d];
            let ex = check_stability(&s, &mu, 0.2, 1, StabilityMode::exhaustive())?;
            let he = check_stability(&s, &mu, 0.2, 1, StabilityMode::heuristic())?;
            if he.implied_delta > ex.implied_delta * (1.0 + 1e-9) + 1e-12 {
                bad += 1;
            }
        }
        Ok((bad == 0, format!("{bad} violations of 40")))
    })());
    c.add("subgaussian rate at eps = 0.01", (|| {
        let q = RateQuery {
            family: RateFamily::Subgaussian,
            epsilon: 0.01,
            n: None,
            d: 3,
            tau: 1.0,
        };
        let v = rate_formula(&q, AlgoConstants::default().c_small)?;
        Ok(((v - 0.021_460).abs() < 1e-5, format!("{v:.6}")))
    })());
}

fn saddle_suite(c: &mut Checks) {
    c.add("primal-dual gap on small instances", (|| {
        let mut rng = seeded(7);
        let mut worst = 0.0f64;
        for _ in 0..30 {
            let n = rng.random_range(3..=8);
            let d = rng.random_range(1..=3);
            let k = rng.random_range(1..=d);
            let keep = rng.random_range(1..n);
            let eps = 1.0 - keep as f64 / n as f64;
            let s = gaussian_set(n, d, &mut rng);
            let r = solve_saddle(&s, eps, k, SaddleOptions { max_iters: 20_000, tol: 1e-6 })?;
            worst = worst.max(r.gap);
        }
        Ok((worst <= 1e-3, format!("worst gap {worst:.2e}")))
    })());
    c.add("dual certificate lies in M_k", (|| {
        let s = gaussian_set(40, 4, &mut seeded(8));
        let r = solve_saddle(&s, 0.1, 2, SaddleOptions::default())?;
        let eig = linalg::sym_eigen(&r.m)?;
        let tr: f64 = eig.values.iter().sum();
        let ok = (tr - 2.0).abs() < 1e-8 && eig.values.iter().all(|&x| x > -1e-8 && x < 1.0 + 1e-8);
        Ok((ok, format!("trace {tr}")))
    })());
    c.add("rounding keeps n - floor(2 eps n)", {
        let w: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let idx = round_weights(&w, 0.1);
        Ok((idx.len() == 40 && idx[0] == 10, format!("{} kept", idx.len())))
    });
    c.add("capped minimum fills smallest values", {
        let (v, _) = capped_min(&[5.0, 1.0, 3.0, 2.0], 0.5);
        Ok(((v - 1.5).abs() < 1e-15, format!("{v}")))
    });
    c.add("relaxed sup gap", (|| {
        let s = gaussian_set(60, 5, &mut seeded(9));
        let r = sup_relaxed_avg_norm(&s, 2, 5000, 1e-6)?;
        Ok((r.gap <= 1e-3, format!("gap {:.2e}", r.gap)))
    })());
}

fn filter_suite(c: &mut Checks) {
    c.add("stopping rule holds on exit", (|| {
        let mut rng = seeded(10);
        let mut s = gaussian_set(600, 5, &mut rng);
        for i in 0..40 {
            s.point_mut(i)[0] += 30.0;
        }
        let params = FilterParams {
            epsilon: 0.1,
            delta: 0.4,
            rho: 0.0,
            k_prime: 1,
            constants: AlgoConstants::default(),
            seed: 10,
            max_iters: None,
        };
        let out = run_filter(&s, &params)?;
        let (_, cov) = linalg::covariance_of(&s, &out.kept);
        let top = linalg::top_k_sum(&cov, 1)?;
        let removed = (0..40).filter(|i| out.kept.binary_search(i).is_err()).count();
        let ok = top <= params.threshold() && out.iterations() <= 1200;
        Ok((ok, format!("{removed}/40 planted points removed, top eigenvalue {top:.3}")))
    })());
    c.add("clean data: estimate equals sample mean", (|| {
        let s = gaussian_set(500, 4, &mut seeded(11));
        let (mu, _) = estimate_mean(&s, 0.05, 0.3, 0.0, AlgoConstants::default(), 0)?;
        let m = s.mean();
        let diff = linalg::norm(&linalg::sub(&mu, &m));
        Ok((diff < 1e-12, format!("{diff:.2e}")))
    })());
}

fn brute_force_w(a: &[Vec<f64>], b: &[Vec<f64>], p: f64) -> f64 {
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |pm| {
        let c: f64 = (0..n).map(|i| linalg::norm(&linalg::sub(&a[i], &b[pm[i]])).powf(p)).sum::<f64>() / n as f64;
        best = best.min(c);
    });
    best.powf(1.0 / p)
}

fn permute(v: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
    if i == v.len() {
        f(v);
        return;
    }
    for j in i..v.len() {
        v.swap(i, j);
        permute(v, i + 1, f);
        v.swap(i, j);
    }
}

fn wasserstein_suite(c: &mut Checks) {
    c.add("fixed projection equals permutation brute force", (|| {
        let mut rng = seeded(12);
        let mut worst = 0.0f64;
        for _ in 0..40 {
            let n = rng.random_range(1..=6);
            let d = rng.random_range(1..=3);
            let p = if rng.random::<bool>() { 1.0 } else { 2.0 };
            let a = gaussian_set(n, d, &mut rng);
            let b = gaussian_set(n, d, &mut rng);
            let v = linalg::projection_from_columns(&linalg::orthonormalize(&gaussian_set(d, d, &mut rng).to_matrix()), 0..1);
            let pa: Vec<Vec<f64>> = a.points().map(|x| linalg::mat_vec(&v, x)).collect();
            let pb: Vec<Vec<f64>> = b.points().map(|x| linalg::mat_vec(&v, x)).collect();
            let exact = wasserstein::w_p_fixed_projection(&a, &b, &v, p)?;
            worst = worst.max((exact - brute_force_w(&pa, &pb, p)).abs());
        }
        Ok((worst <= 1e-10, format!("max difference {worst:.2e}")))
    })());
    c.add("1-D quantile coupling matches assignment", (|| {
        let mut rng = seeded(13);
        let mut worst = 0.0f64;
        for _ in 0..40 {
            let n = rng.random_range(1..=20);
            let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let w = wasserstein::w_p_1d(&a, &b, 1.0)?;
            let (_, total) = solve_assignment(n, |i, j| (a[i] - b[j]).abs());
            worst = worst.max((w - total / n as f64).abs());
        }
        Ok((worst <= 1e-10, format!("max difference {worst:.2e}")))
    })());
    c.add("sliced bracket is ordered", (|| {
        let mut rng = seeded(14);
        let a = gaussian_set(30, 4, &mut rng);
        let b = gaussian_set(45, 4, &mut rng);
        let r = wasserstein::sliced_w_p(&a, &b, 2, 1.0, Default::default(), &mut rng)?;
        Ok((r.lower <= r.upper * (1.0 + 1e-9), format!("[{:.4}, {:.4}]", r.lower, r.upper)))
    })());
}

fn pca_suite(c: &mut Checks) {
    c.add("pca_error closed forms", (|| {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0]));
        let a = pca_error(&[1.0, 0.0], &s)?;
        let b = pca_error(&[0.0, 1.0], &s)?;
        Ok((a.abs() < 1e-15 && (b - 0.5).abs() < 1e-15, format!("{a} {b}")))
    })());
    c.add("robust_pca finds the spike", (|| {
        let mut rng = seeded(15);
        let d = 6;
        let mut s = gaussian_set(2000, d, &mut rng);
        for i in 0..s.len() {
            s.point_mut(i)[0] *= 3.0;
        }
        for i in 0..100 {
            let x = s.point_mut(i);
            x.iter_mut().for_each(|v| *v = 0.0);
            x[1] = if i % 2 == 0 { 25.0 } else { -25.0 };
        }
        let mut sigma = DMatrix::identity(d, d);
        sigma[(0, 0)] = 9.0;
        let params = PcaParams {
            epsilon: 0.05,
            gamma: 0.3,
            rho_bar: 0.0,
            constants: AlgoConstants::default(),
            seed: 15,
            centering: Centering::None,
            max_iters: None,
        };
        let out = robust_pca(&s, &params)?;
        let e = pca_error(&out.v, &sigma)?;
        let unit = (linalg::norm(&out.v) - 1.0).abs() < 1e-10;
        Ok((e < 0.05 && unit, format!("error {e:.4}")))
    })());
}
