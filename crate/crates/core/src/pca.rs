//! Robust principal component analysis under whitened local contamination.
//!
//! Filtering uses the scores s(x) = (v^T x)^2 along the current top
//! eigenvector v of the (uncentred) second moment. A round stops when the mean
//! of the top floor(eps |T|) scores is at most C_pca * gamma_tilde times the
//! mean of all scores, with gamma_tilde = C_stab (gamma + rho_bar^2 / eps).

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversaries::{perturb_local, LocalStrategy, PerturbationSet};
use crate::error::{Error, Result};
use crate::linalg;
use crate::stability::{check_stability, StabilityMode};
use crate::types::{AlgoConstants, PointSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Centering {
    /// Data are assumed centred.
    None,
    /// Replace consecutive pairs by (x_{2i} - x_{2i+1}) / sqrt 2; doubles eps.
    PairDifferences,
    /// Subtract the filtered mean computed with the given stability parameter.
    RobustMean { delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaParams {
    pub epsilon: f64,
    /// PCA-stability parameter of the clean data.
    pub gamma: f64,
    /// Whitened local budget.
    pub rho_bar: f64,
    #[serde(default)]
    pub constants: AlgoConstants,
    pub seed: u64,
    #[serde(default = "no_centering")]
    pub centering: Centering,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

fn no_centering() -> Centering {
    Centering::None
}

impl PcaParams {
    pub fn gamma_tilde(&self) -> f64 {
        let local = if self.epsilon > 0.0 {
            self.rho_bar * self.rho_bar / self.epsilon
        } else {
            0.0
        };
        self.constants.c_stab * (self.gamma + local)
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if !(self.epsilon >= 0.0 && self.epsilon < self.constants.c_small) {
            return Err(Error::invalid(format!(
                "epsilon {} outside [0, c_small = {})",
                self.epsilon, self.constants.c_small
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma must be finite and nonnegative"));
        }
        if !(self.rho_bar >= 0.0) || (self.epsilon > 0.0 && self.rho_bar >= self.epsilon.sqrt()) {
            return Err(Error::invalid(format!(
                "rho_bar {} must lie in [0, sqrt(eps))",
                self.rho_bar
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaIteration {
    pub iter: usize,
    pub tail_mean: f64,
    pub mean_score: f64,
    pub removed: usize,
    pub survivors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaOutcome {
    pub v: Vec<f64>,
    pub trace: Vec<PcaIteration>,
}

fn top_vector(s: &PointSet, idx: &[usize]) -> Result<Vec<f64>> {
    let d = s.dim();
    let m2 = linalg::second_moment_about(idx.iter().map(|&i| s.point(i)), &vec![0.0; d], idx.len());
    let eig = linalg::sym_eigen(&m2)?;
    Ok(eig.vectors.column(0).iter().copied().collect())
}

/// Robust estimate of the top eigenvector of the clean covariance.
pub fn robust_pca(t: &PointSet, params: &PcaParams) -> Result<PcaOutcome> {
    params.validate()?;
    if t.is_empty() {
        return Err(Error::Empty);
    }
    let mut eps = params.epsilon;
    let data = match params.centering {
        Centering::None => t.clone().without_labels(),
        Centering::PairDifferences => {
            if t.len() < 2 {
                return Err(Error::invalid("pair differences need at least two points"));
            }
            eps = (2.0 * eps).min(0.49);
            let rows: Vec<Vec<f64>> = (0..t.len() / 2)
                .map(|i| {
                    linalg::sub(t.point(2 * i), t.point(2 * i + 1))
                        .into_iter()
                        .map(|x| x / std::f64::consts::SQRT_2)
                        .collect()
                })
                .collect();
            PointSet::from_rows(&rows)?
        }
        Centering::RobustMean { delta } => {
            let (mu, _) = crate::filter::estimate_mean(
                t,
                params.epsilon,
                delta,
                params.rho_bar,
                params.constants,
                params.seed ^ 0x9e37_79b9_7f4a_7c15,
            )?;
            let rows: Vec<Vec<f64>> = t.points().map(|p| linalg::sub(p, &mu)).collect();
            PointSet::from_rows(&rows)?
        }
    };
    let n = data.len();
    let threshold = params.constants.c_pca * params.gamma_tilde();
    let min_size = (1.0 - 3.0 * eps) * n as f64;
    let max_iters = params.max_iters.unwrap_or(2 * n);
    let mut rng = crate::rng::seeded(params.seed);
    let mut active: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();
    for iter in 0..max_iters {
        let v = top_vector(&data, &active)?;
        let m = (eps * active.len() as f64 + 1e-9).floor() as usize;
        let scores: Vec<f64> = active.iter().map(|&i| linalg::dot(&v, data.point(i)).powi(2)).collect();
        let mean_score = scores.iter().sum::<f64>() / scores.len() as f64;
        let mut order: Vec<usize> = (0..active.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(active[a].cmp(&active[b])));
        let tail_mean = if m > 0 {
            order[..m].iter().map(|&p| scores[p]).sum::<f64>() / m as f64
        } else {
            0.0
        };
        if m == 0 || tail_mean <= threshold * mean_score {
            trace.push(PcaIteration {
                iter,
                tail_mean,
                mean_score,
                removed: 0,
                survivors: active.len(),
            });
            return Ok(PcaOutcome { v, trace });
        }
        let max_score = scores[order[0]];
        let mut drop = vec![false; active.len()];
        for &p in &order[..m] {
            let u01: f64 = rng.random();
            if u01 < scores[p] / max_score {
                drop[p] = true;
            }
        }
        let removed = drop.iter().filter(|&&x| x).count();
        active = (0..active.len()).filter(|&p| !drop[p]).map(|p| active[p]).collect();
        trace.push(PcaIteration {
            iter,
            tail_mean,
            mean_score,
            removed,
            survivors: active.len(),
        });
        if (active.len() as f64) < min_size {
            return Err(Error::degenerate(format!(
                "{} survivors fell below (1 - 3 eps) n = {min_size:.1}",
                active.len()
            )));
        }
    }
    let v = top_vector(&data, &active)?;
    Ok(PcaOutcome { v, trace })
}

/// 1 - v^T Sigma v / ||Sigma||_op for a unit vector v.
pub fn pca_error(v: &[f64], sigma: &DMatrix<f64>) -> Result<f64> {
    if v.len() != sigma.nrows() {
        return Err(Error::DimensionMismatch("vector and covariance differ in dimension".into()));
    }
    let nv = linalg::norm(v);
    if nv == 0.0 {
        return Err(Error::invalid("zero vector"));
    }
    let top = linalg::op_norm_sym(sigma)?;
    if top == 0.0 {
        return Err(Error::invalid("zero covariance"));
    }
    let u: Vec<f64> = v.iter().map(|x| x / nv).collect();
    Ok((1.0 - linalg::quad_form(sigma, &u) / top).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaStabilityReport {
    /// max over large subsets S' of ||Sigma^{-1/2} M_{S'} Sigma^{-1/2} - I||_op.
    pub gamma: f64,
    pub witness: Vec<usize>,
    pub exhaustive: bool,
}

/// PCA stability of S relative to Sigma, measured on whitened points about 0.
pub fn check_pca_stability(
    s: &PointSet,
    sigma: &DMatrix<f64>,
    eps: f64,
    mode: StabilityMode,
) -> Result<PcaStabilityReport> {
    let d = s.dim();
    if sigma.nrows() != d {
        return Err(Error::DimensionMismatch("covariance does not match data".into()));
    }
    let w = linalg::psd_inv_sqrt(sigma, 1e-12)?;
    let rows: Vec<Vec<f64>> = s.points().map(|p| linalg::mat_vec(&w, p)).collect();
    let white = PointSet::from_rows(&rows)?;
    let rep = check_stability(&white, &vec![0.0; d], eps, 1, mode)?;
    Ok(PcaStabilityReport {
        gamma: rep.worst_second_moment_dev,
        witness: rep.second_moment_witness,
        exhaustive: rep.exhaustive,
    })
}

/// Local perturbation whose rank-1 budget is measured on Sigma^{-1/2} Delta.
pub fn whitened_local_adversary(
    s0: &PointSet,
    rho_bar: f64,
    sigma: &DMatrix<f64>,
    strategy: &LocalStrategy,
    rng: &mut ChaCha8Rng,
) -> Result<(PointSet, PerturbationSet)> {
    perturb_local(s0, rho_bar, 1, strategy, rng, Some(sigma))
}
