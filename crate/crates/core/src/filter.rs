//! Randomized filtering for mean estimation and distribution learning.
//!
//! Each round computes the top-k' eigenprojection M of the empirical
//! covariance. If <M, Sigma_T> is within k' + C_stop * delta_tilde^2 / eps the
//! current set is returned. Otherwise the floor(eps |T|) points with the
//! largest scores g(x) = (x - mu_T)^T M (x - mu_T) are each deleted with
//! probability g(x) / max g.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{AlgoConstants, Label, PointSet, ProjectionBudget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub epsilon: f64,
    /// Stability parameter of the clean distribution.
    pub delta: f64,
    /// Local contamination budget.
    pub rho: f64,
    /// Slicing rank k'.
    pub k_prime: usize,
    #[serde(default)]
    pub constants: AlgoConstants,
    pub seed: u64,
    /// Defaults to 2n.
    #[serde(default)]
    pub max_iters: Option<usize>,
}

impl FilterParams {
    /// delta_tilde = delta * sqrt(k') + rho.
    pub fn delta_tilde(&self) -> f64 {
        self.delta * (self.k_prime as f64).sqrt() + self.rho
    }

    /// Stopping threshold k' + C_stop * delta_tilde^2 / eps.
    pub fn threshold(&self) -> f64 {
        let dt = self.delta_tilde();
        self.k_prime as f64 + self.constants.c_stop * dt * dt / self.epsilon
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.constants.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon < self.constants.c_small) {
            return Err(Error::invalid(format!(
                "epsilon {} outside (0, c_small = {})",
                self.epsilon, self.constants.c_small
            )));
        }
        if !(self.delta >= self.epsilon && self.delta.is_finite()) {
            return Err(Error::invalid(format!(
                "delta {} must be at least epsilon {}",
                self.delta, self.epsilon
            )));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid("rho must be finite and nonnegative"));
        }
        if self.k_prime == 0 || self.k_prime > d {
            return Err(Error::InvalidRank { k: self.k_prime, d });
        }
        // The one-round analysis needs delta_tilde >= eps sqrt(k').
        if self.delta_tilde() < self.epsilon * (self.k_prime as f64).sqrt() {
            return Err(Error::invalid("delta_tilde below eps * sqrt(k')"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterIteration {
    pub iter: usize,
    /// <M, Sigma_T> - k'.
    pub lambda: f64,
    /// Original indices deleted in this round.
    pub removed: Vec<usize>,
    /// Points left after this round.
    pub survivors: usize,
    pub max_score: f64,
    /// Share of the round's total score carried by non-outliers (labelled input only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inlier_score_fraction: Option<f64>,
    #[serde(skip)]
    pub projection: Option<ProjectionBudget>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stopped,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterTrace {
    pub iterations: Vec<FilterIteration>,
    pub threshold: f64,
    pub delta_tilde: f64,
    pub termination: Option<Termination>,
}

impl FilterTrace {
    /// One JSON object per round: {iter, lambda, removed, survivors, max_score}.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for it in &self.iterations {
            let line = serde_json::json!({
                "iter": it.iter,
                "lambda": it.lambda,
                "removed": it.removed,
                "survivors": it.survivors,
                "max_score": it.max_score,
            });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub survivors: PointSet,
    /// Original indices of the survivors, increasing.
    pub kept: Vec<usize>,
    pub trace: FilterTrace,
}

impl FilterOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.iterations.len()
    }
}

/// Runs the filter on T.
pub fn run_filter(t: &PointSet, params: &FilterParams) -> Result<FilterOutcome> {
    let (n, d) = (t.len(), t.dim());
    if n == 0 {
        return Err(Error::Empty);
    }
    params.validate(d)?;
    let k = params.k_prime;
    let eps = params.epsilon;
    let threshold = params.threshold();
    let max_iters = params.max_iters.unwrap_or(2 * n);
    let min_size = (1.0 - 3.0 * eps) * n as f64;
    let mut rng = crate::rng::seeded(params.seed);
    let mut active: Vec<usize> = (0..n).collect();
    let mut trace = FilterTrace {
        iterations: Vec::new(),
        threshold,
        delta_tilde: params.delta_tilde(),
        termination: None,
    };

    for iter in 0..max_iters {
        let (mu, cov) = linalg::covariance_of(t, &active);
        let eig = linalg::sym_eigen(&cov)?;
        let value: f64 = eig.values[..k].iter().sum();
        let u = linalg::leading_vectors(&eig, k);
        let projection = ProjectionBudget {
            matrix: &u * u.transpose(),
            rank_budget: k,
            kind: crate::types::BudgetKind::Projection,
        };
        if value <= threshold {
            trace.iterations.push(FilterIteration {
                iter,
                lambda: value - k as f64,
                removed: vec![],
                survivors: active.len(),
                max_score: 0.0,
                inlier_score_fraction: None,
                projection: Some(projection),
            });
            trace.termination = Some(Termination::Stopped);
            return Ok(finish(t, active, trace));
        }
        let m = (eps * active.len() as f64 + 1e-9).floor() as usize;
        if m == 0 {
            return Err(Error::Degenerate {
                reason: format!("no points to score with |T| = {}", active.len()),
                trace: Some(Box::new(trace)),
            });
        }
        let scores: Vec<f64> = active
            .iter()
            .map(|&i| {
                let y = linalg::sub(t.point(i), &mu);
                (0..k)
                    .map(|c| {
                        let z: f64 = (0..d).map(|r| u[(r, c)] * y[r]).sum();
                        z * z
                    })
                    .sum()
            })
            .collect();
        // Rank by score, larger first; equal scores go to the lower index first.
        let mut order: Vec<usize> = (0..active.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap()
                .then(active[a].cmp(&active[b]))
        });
        let top = &order[..m];
        let max_score = scores[top[0]];
        if max_score <= 0.0 {
            return Err(Error::Degenerate {
                reason: "all scores are zero".into(),
                trace: Some(Box::new(trace)),
            });
        }
        let inlier_score_fraction = t.labels().map(|labels| {
            let total: f64 = top.iter().map(|&p| scores[p]).sum();
            let clean: f64 = top
                .iter()
                .filter(|&&p| labels[active[p]] != Label::Outlier)
                .map(|&p| scores[p])
                .sum();
            clean / total
        });
        // One uniform draw per candidate, in score-rank order.
        let mut drop = vec![false; active.len()];
        for &p in top {
            let u01: f64 = rng.random();
            if u01 < scores[p] / max_score {
                drop[p] = true;
            }
        }
        let mut removed: Vec<usize> = (0..active.len()).filter(|&p| drop[p]).map(|p| active[p]).collect();
        removed.sort_unstable();
        active = (0..active.len()).filter(|&p| !drop[p]).map(|p| active[p]).collect();
        trace.iterations.push(FilterIteration {
            iter,
            lambda: value - k as f64,
            removed,
            survivors: active.len(),
            max_score,
            inlier_score_fraction,
            projection: Some(projection),
        });
        if (active.len() as f64) < min_size {
            return Err(Error::Degenerate {
                reason: format!("{} survivors fell below (1 - 3 eps) n = {min_size:.1}", active.len()),
                trace: Some(Box::new(trace)),
            });
        }
    }
    trace.termination = Some(Termination::MaxIters);
    Ok(finish(t, active, trace))
}

fn finish(t: &PointSet, kept: Vec<usize>, trace: FilterTrace) -> FilterOutcome {
    FilterOutcome {
        survivors: t.subset(&kept),
        kept,
        trace,
    }
}

/// Robust mean: the filter with k' = 1 and delta_tilde = C_stab (delta + rho),
/// followed by the survivors' mean.
pub fn estimate_mean(
    t: &PointSet,
    eps: f64,
    delta: f64,
    rho: f64,
    constants: AlgoConstants,
    seed: u64,
) -> Result<(Vec<f64>, FilterOutcome)> {
    let params = FilterParams {
        epsilon: eps,
        delta: constants.c_stab * delta,
        rho: constants.c_stab * rho,
        k_prime: 1,
        constants,
        seed,
        max_iters: None,
    };
    let out = run_filter(t, &params)?;
    Ok((out.survivors.mean(), out))
}

/// Distribution learning under the k'-sliced metric: the surviving multiset.
pub fn learn_distribution(t: &PointSet, params: &FilterParams) -> Result<FilterOutcome> {
    run_filter(t, params)
}

/// Oracle-mode quantities for a labelled T (non-outliers form S').
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateDiagnostics {
    /// sup_M <M, Sigma_{T\S'}> + ||mu_{T\S'} - mu_{S'}||_M^2.
    pub r_prime: f64,
    /// ||mu_T - mu_{S'}||_M at the witness M.
    pub mean_dev: f64,
    /// <M, Sigma_T> - k' at the top-k' eigenprojection of Sigma_T.
    pub lambda: f64,
    /// lambda / eps + delta_tilde^2 / eps^2 + k'.
    pub bound: f64,
    pub witness: ProjectionBudget,
}

pub fn certificate_diagnostics(
    t: &PointSet,
    k_prime: usize,
    eps: f64,
    delta_tilde: f64,
) -> Result<CertificateDiagnostics> {
    let d = t.dim();
    let labels = t
        .labels()
        .ok_or_else(|| Error::invalid("certificate diagnostics need labelled input"))?;
    if k_prime == 0 || k_prime > d {
        return Err(Error::InvalidRank { k: k_prime, d });
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let clean: Vec<usize> = (0..t.len()).filter(|&i| labels[i].is_clean()).collect();
    let bad: Vec<usize> = (0..t.len()).filter(|&i| !labels[i].is_clean()).collect();
    if clean.is_empty() {
        return Err(Error::Empty);
    }
    let (mu_s, _) = linalg::covariance_of(t, &clean);
    let all: Vec<usize> = (0..t.len()).collect();
    let (mu_t, cov_t) = linalg::covariance_of(t, &all);
    let (top, _) = linalg::top_k_budget(&cov_t, k_prime)?;
    let lambda = top - k_prime as f64;
    let (r_prime, witness) = if bad.is_empty() {
        (0.0, crate::linalg::top_k_budget(&nalgebra::DMatrix::zeros(d, d), k_prime)?.1)
    } else {
        let (mu_b, cov_b) = linalg::covariance_of(t, &bad);
        let g = linalg::dvec(&linalg::sub(&mu_b, &mu_s));
        linalg::top_k_budget(&(cov_b + &g * g.transpose()), k_prime)?
    };
    let mean_dev = linalg::quad_form(&witness.matrix, &linalg::sub(&mu_t, &mu_s))
        .max(0.0)
        .sqrt();
    Ok(CertificateDiagnostics {
        r_prime,
        mean_dev,
        lambda,
        bound: lambda / eps + delta_tilde * delta_tilde / (eps * eps) + k_prime as f64,
        witness,
    })
}
