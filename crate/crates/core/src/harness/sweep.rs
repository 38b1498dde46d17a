//! Monte-Carlo sweeps over contamination level and local budget.
//!
//! Rows are written as `config_hash,seed,metric,value` after each grid point,
//! in a fixed order, so interrupted runs keep their finished rows and repeated
//! runs with the same configuration are byte-identical (runtime aside).

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines;
use super::config::{Estimator, ExperimentConfig, Metric};
use crate::adversaries::{contaminate, ContaminationRecipe};
use crate::error::{Error, Result};
use crate::filter::{estimate_mean, learn_distribution, FilterParams};
use crate::linalg;
use crate::pca::{check_pca_stability, pca_error, robust_pca, PcaParams};
use crate::rng;
use crate::stability::{rate_formula, RateQuery, StabilityMode};
use crate::types::PointSet;
use crate::wasserstein::{sliced_w_p, SlicedOptions};

/// Formats a value with 12 significant digits; non-finite values as `NaN`/`inf`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.11e}")
    }
}

/// Per-seed metric values for one concrete configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub values: Vec<(String, f64)>,
    /// Set when the run hit a degenerate state; all values are then NaN.
    pub degenerate: Option<String>,
}

/// Stability parameter for a configuration: the override or the rate formula.
pub fn config_delta(cfg: &ExperimentConfig) -> Result<f64> {
    if let Some(d) = cfg.delta {
        return Ok(d);
    }
    let q = RateQuery {
        family: cfg.generator.rate_family(),
        epsilon: cfg.recipe.epsilon,
        n: Some(cfg.n as u64),
        d: cfg.generator.dim(),
        tau: cfg.tau,
    };
    Ok(rate_formula(&q, cfg.constants.c_small)?.max(cfg.recipe.epsilon))
}

struct Estimate {
    mean: Option<Vec<f64>>,
    /// Output multiset (survivors for filters, the whole input otherwise).
    set: PointSet,
    removed_clean_fraction: f64,
    direction: Option<Vec<f64>>,
}

fn estimate(cfg: &ExperimentConfig, t: &PointSet, clean: &PointSet, seed: u64) -> Result<Estimate> {
    let eps = cfg.recipe.epsilon;
    let rho = cfg.recipe.rho;
    let delta = config_delta(cfg)?;
    let removed_fraction = |kept: &[usize]| -> f64 {
        let clean_idx = t.clean_indices();
        if clean_idx.is_empty() {
            return 0.0;
        }
        let mut keep = vec![false; t.len()];
        for &i in kept {
            keep[i] = true;
        }
        clean_idx.iter().filter(|&&i| !keep[i]).count() as f64 / clean_idx.len() as f64
    };
    let plain = |mean: Vec<f64>| Estimate {
        mean: Some(mean),
        set: t.clone(),
        removed_clean_fraction: 0.0,
        direction: None,
    };
    Ok(match &cfg.estimator {
        Estimator::FilterMean => {
            let (mu, out) = estimate_mean(t, eps, delta, rho, cfg.constants, seed)?;
            Estimate {
                mean: Some(mu),
                removed_clean_fraction: removed_fraction(&out.kept),
                set: out.survivors,
                direction: None,
            }
        }
        Estimator::LearnDist { k_prime } => {
            let params = FilterParams {
                epsilon: eps,
                delta,
                rho,
                k_prime: *k_prime,
                constants: cfg.constants,
                seed,
                max_iters: None,
            };
            let out = learn_distribution(t, &params)?;
            Estimate {
                mean: Some(out.survivors.mean()),
                removed_clean_fraction: removed_fraction(&out.kept),
                set: out.survivors,
                direction: None,
            }
        }
        Estimator::RobustPca { gamma } => {
            let sigma = cfg_sigma(cfg, clean)?;
            let gamma = match gamma {
                Some(g) => *g,
                None => check_pca_stability(clean, &sigma, eps.max(1e-9), StabilityMode::heuristic())?.gamma,
            };
            let params = PcaParams {
                epsilon: eps,
                gamma,
                rho_bar: rho,
                constants: cfg.constants,
                seed,
                centering: crate::pca::Centering::None,
                max_iters: None,
            };
            let out = robust_pca(t, &params)?;
            Estimate {
                mean: None,
                set: t.clone(),
                removed_clean_fraction: f64::NAN,
                direction: Some(out.v),
            }
        }
        Estimator::SampleMean => plain(baselines::sample_mean(t)?),
        Estimator::CoordinateMedian => plain(baselines::coordinate_median(t)?),
        Estimator::GeometricMedian => plain(baselines::geometric_median(t)?),
    })
}

fn cfg_sigma(cfg: &ExperimentConfig, _clean: &PointSet) -> Result<nalgebra::DMatrix<f64>> {
    use super::generators::Generator;
    let d = cfg.generator.dim();
    Ok(match &cfg.generator {
        Generator::BoundedCov { sigma, .. } => crate::matrix_serde::from_rows(sigma).map_err(Error::invalid)?,
        _ => nalgebra::DMatrix::identity(d, d),
    })
}

/// Runs one concrete configuration for one seed.
pub fn run_once(cfg: &ExperimentConfig, seed: u64) -> RunResult {
    let names: Vec<String> = cfg
        .metrics
        .iter()
        .flat_map(|m| m.row_names().iter().map(|s| s.to_string()))
        .collect();
    match run_once_inner(cfg, seed) {
        Ok(values) => RunResult {
            seed,
            values,
            degenerate: None,
        },
        Err(e) => RunResult {
            seed,
            values: names.into_iter().map(|n| (n, f64::NAN)).collect(),
            degenerate: Some(e.to_string()),
        },
    }
}

fn run_once_inner(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(String, f64)>> {
    let mut data_rng = rng::child(seed, 0);
    let sample = cfg.generator.sample(cfg.n, &mut data_rng)?;
    let recipe = ContaminationRecipe {
        seed: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1),
        ..cfg.recipe.clone()
    };
    let (t, _) = contaminate(&sample.points, &recipe)?;
    let start = Instant::now();
    let est = estimate(cfg, &t, &sample.points, seed)?;
    let runtime = start.elapsed().as_secs_f64() * 1e3;
    let mut out = Vec::new();
    for m in &cfg.metrics {
        match m {
            Metric::L2MeanError => {
                let v = est
                    .mean
                    .as_ref()
                    .map(|mu| linalg::norm(&linalg::sub(mu, &sample.mean)))
                    .unwrap_or(f64::NAN);
                out.push(("l2_mean_error".into(), v));
            }
            Metric::SlicedW1Bounds | Metric::SlicedW2Bounds => {
                let p = if *m == Metric::SlicedW1Bounds { 1.0 } else { 2.0 };
                let k = match cfg.estimator {
                    Estimator::LearnDist { k_prime } => k_prime,
                    _ => cfg.recipe.k,
                };
                let mut r = rng::child(seed, 7);
                let b = sliced_w_p(&est.set, &sample.points, k, p, SlicedOptions::default(), &mut r)?;
                let names = m.row_names();
                out.push((names[0].into(), b.lower));
                out.push((names[1].into(), b.upper));
            }
            Metric::PcaError => {
                let v = match &est.direction {
                    Some(v) => pca_error(v, &sample.covariance)?,
                    None => f64::NAN,
                };
                out.push(("pca_error".into(), v));
            }
            Metric::RuntimeMs => out.push(("runtime_ms".into(), runtime)),
            Metric::RemovedInlierFraction => out.push(("removed_inlier_fraction".into(), est.removed_clean_fraction)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub config_hash: String,
    pub epsilon: f64,
    pub rho: f64,
    pub metric: String,
    pub median: f64,
    pub iqr: f64,
    /// Runs that produced NaN (degenerate) for this metric.
    pub nan_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub summaries: Vec<MetricSummary>,
    pub degenerate_runs: usize,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile(&v, 0.5)
}

/// Runs the sweep, writing CSV rows to `csv` after each grid point.
pub fn run_sweep<W: Write>(cfg: &ExperimentConfig, threads: usize, mut csv: W) -> Result<SweepResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    writeln!(csv, "config_hash,seed,metric,value")?;
    let mut summaries = Vec::new();
    let mut degenerate_runs = 0;
    for point in cfg.grid() {
        let hash = point.config_hash();
        let runs: Vec<RunResult> = pool.install(|| point.seeds.par_iter().map(|&s| run_once(&point, s)).collect());
        for r in &runs {
            if r.degenerate.is_some() {
                degenerate_runs += 1;
            }
            for (name, v) in &r.values {
                writeln!(csv, "{hash},{},{name},{}", r.seed, format_value(*v))?;
            }
        }
        csv.flush()?;
        let names: Vec<String> = runs
            .first()
            .map(|r| r.values.iter().map(|(n, _)| n.clone()).collect())
            .unwrap_or_default();
        for (j, name) in names.iter().enumerate() {
            let vals: Vec<f64> = runs.iter().map(|r| r.values[j].1).collect();
            let mut finite: Vec<f64> = vals.iter().copied().filter(|x| !x.is_nan()).collect();
            finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
            summaries.push(MetricSummary {
                config_hash: hash.clone(),
                epsilon: point.recipe.epsilon,
                rho: point.recipe.rho,
                metric: name.clone(),
                median: quantile(&finite, 0.5),
                iqr: quantile(&finite, 0.75) - quantile(&finite, 0.25),
                nan_count: vals.len() - finite.len(),
            });
        }
    }
    Ok(SweepResult {
        summaries,
        degenerate_runs,
    })
}
