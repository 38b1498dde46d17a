//! Contamination models: local perturbations under a sliced budget and global
//! replacement of an epsilon-fraction.
//!
//! Every local strategy is scaled so its budget bound holds by construction:
//!
//! * `common_shift`: each ||V Delta_i|| <= ||Delta_i|| = rho.
//! * `pair_blowup`: two opposite spikes of size rho*n/2.
//! * `random_gaussian_scaled`: Cauchy-Schwarz,
//!   (1/n) sum ||V z_i|| <= sqrt(sup_V (1/n) sum ||V z_i||^2).
//! * `subspace_shift`: cycle through m orthonormal directions with magnitude
//!   rho / sqrt(f_max * min(k, m)), again by Cauchy-Schwarz.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{BudgetKind, Label, PointSet, ProjectionBudget};

/// Which norm the local budget constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalBudgetKind {
    /// sup over rank-k projections V of (1/n) sum ||V Delta_i|| <= rho.
    StrongSliced,
    /// (1/n) sum ||Delta_i|| <= rho.
    Weak,
    /// The sliced budget measured on Sigma^{-1/2} Delta_i.
    Whitened,
}

/// Per-point displacements Delta_i = x_i - x_i^0, order-matched to the clean set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSet {
    pub deltas: Vec<Vec<f64>>,
    pub kind: LocalBudgetKind,
    pub rho: f64,
    pub k: usize,
    /// Budget bound implied by the construction (never above rho).
    pub constructed_bound: f64,
}

impl PerturbationSet {
    pub fn as_pointset(&self) -> Result<PointSet> {
        PointSet::from_rows(&self.deltas)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum LocalStrategy {
    None,
    CommonShift {
        #[serde(default)]
        direction: Option<Vec<f64>>,
    },
    PairBlowup {
        #[serde(default)]
        direction: Option<Vec<f64>>,
    },
    RandomGaussianScaled,
    SubspaceShift {
        /// Rows spanning the subspace; orthonormalised before use.
        basis: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum GlobalStrategy {
    None,
    /// All outliers at mu_S + radius * u.
    Cluster {
        #[serde(default)]
        direction: Option<Vec<f64>>,
        radius: f64,
    },
    /// Outliers split between mu_S + radius * u and mu_S - radius * u.
    Antipodal {
        #[serde(default)]
        direction: Option<Vec<f64>>,
        radius: f64,
    },
    /// Outliers drawn from N(mu_S, scale^2 I).
    ResampleIsotropic {
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

fn default_scale() -> f64 {
    3.0
}

/// Full description of a contamination run: local perturbation followed by
/// global replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationRecipe {
    pub epsilon: f64,
    pub rho: f64,
    pub k: usize,
    pub local_strategy: LocalStrategy,
    pub global_strategy: GlobalStrategy,
    #[serde(default)]
    pub seed: u64,
}

impl ContaminationRecipe {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(Error::invalid(format!("epsilon {} outside [0, 1/2)", self.epsilon)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("rho {} must be finite and nonnegative", self.rho)));
        }
        if self.k == 0 || self.k > d {
            return Err(Error::InvalidRank { k: self.k, d });
        }
        Ok(())
    }
}

fn unit_direction(dir: &Option<Vec<f64>>, d: usize) -> Result<Vec<f64>> {
    match dir {
        None => {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            Ok(e)
        }
        Some(v) => {
            if v.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "direction has length {}, data dimension is {d}",
                    v.len()
                )));
            }
            let nv = linalg::norm(v);
            if nv == 0.0 || !nv.is_finite() {
                return Err(Error::invalid("direction must be a nonzero finite vector"));
            }
            Ok(v.iter().map(|x| x / nv).collect())
        }
    }
}

/// Builds displacements with sliced budget at most rho (in the coordinates the
/// budget is measured in).
fn build_deltas(
    n: usize,
    d: usize,
    rho: f64,
    k: usize,
    strategy: &LocalStrategy,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let zero = vec![vec![0.0; d]; n];
    match strategy {
        LocalStrategy::None => Ok((zero, 0.0)),
        LocalStrategy::CommonShift { direction } => {
            let v = unit_direction(direction, d)?;
            let delta: Vec<f64> = v.iter().map(|x| rho * x).collect();
            Ok((vec![delta; n], rho))
        }
        LocalStrategy::PairBlowup { direction } => {
            if n < 2 {
                return Err(Error::invalid("pair_blowup needs at least two points"));
            }
            let v = unit_direction(direction, d)?;
            let mag = 0.5 * rho * n as f64;
            let mut out = zero;
            out[0] = v.iter().map(|x| mag * x).collect();
            out[1] = v.iter().map(|x| -mag * x).collect();
            Ok((out, rho))
        }
        LocalStrategy::RandomGaussianScaled => {
            let z: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
                .collect();
            let ps = PointSet::from_rows(&z)?;
            let m2 = linalg::second_moment_about(ps.points(), &vec![0.0; d], n);
            let top = linalg::top_k_sum(&m2, k)?;
            if top <= 0.0 {
                return Ok((zero, 0.0));
            }
            let scale = rho / top.sqrt();
            Ok((
                z.into_iter()
                    .map(|r| r.into_iter().map(|x| x * scale).collect())
                    .collect(),
                rho,
            ))
        }
        LocalStrategy::SubspaceShift { basis } => {
            if basis.is_empty() {
                return Err(Error::invalid("subspace_shift needs at least one basis vector"));
            }
            if basis.iter().any(|b| b.len() != d) {
                return Err(Error::DimensionMismatch("subspace basis dimension".into()));
            }
            let m = basis.len();
            if m > d {
                return Err(Error::invalid("subspace basis has more vectors than dimensions"));
            }
            let b = DMatrix::from_fn(d, m, |i, j| basis[j][i]);
            let q = linalg::orthonormalize(&b);
            let per = n.div_ceil(m);
            let f_max = per as f64 / n as f64;
            let mag = rho / (f_max * k.min(m) as f64).sqrt();
            let out = (0..n)
                .map(|i| {
                    let c = i % m;
                    (0..d).map(|r| mag * q[(r, c)]).collect()
                })
                .collect();
            Ok((out, rho))
        }
    }
}

/// Applies a local perturbation with budget rho under rank k.
///
/// With `whitener = Some(sigma)` the budget is measured on Sigma^{-1/2} Delta_i:
/// displacements are generated in whitened coordinates and mapped back by
/// Sigma^{1/2}. The output is checked against a certified lower bound on the
/// realised budget before it is returned.
pub fn perturb_local(
    s0: &PointSet,
    rho: f64,
    k: usize,
    strategy: &LocalStrategy,
    rng: &mut ChaCha8Rng,
    whitener: Option<&DMatrix<f64>>,
) -> Result<(PointSet, PerturbationSet)> {
    let (n, d) = (s0.len(), s0.dim());
    if n == 0 {
        return Err(Error::Empty);
    }
    if k == 0 || k > d {
        return Err(Error::InvalidRank { k, d });
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::invalid("rho must be finite and nonnegative"));
    }
    let (mut deltas, bound) = build_deltas(n, d, rho, k, strategy, rng)?;
    let kind = match whitener {
        Some(sigma) => {
            let root = linalg::psd_sqrt(sigma, 1e-8)?;
            deltas = deltas.iter().map(|v| linalg::mat_vec(&root, v)).collect();
            LocalBudgetKind::Whitened
        }
        None if k == d => LocalBudgetKind::Weak,
        None => LocalBudgetKind::StrongSliced,
    };

    // Reject anything that is demonstrably over budget.
    let measured: Vec<Vec<f64>> = match whitener {
        Some(sigma) => {
            let inv = linalg::psd_inv_sqrt(sigma, 1e-12)?;
            deltas.iter().map(|v| linalg::mat_vec(&inv, v)).collect()
        }
        None => deltas.clone(),
    };
    let flat: Vec<f64> = measured.concat();
    let w = vec![1.0 / n as f64; n];
    let (lower, _) = max_projected_norm_sum(&flat, d, &w, k, 2, 30, rng)?;
    if lower > rho * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::BudgetExceeded { lower, rho });
    }

    let mut data = s0.data().to_vec();
    for (i, dl) in deltas.iter().enumerate() {
        for j in 0..d {
            data[i * d + j] += dl[j];
        }
    }
    let labels = deltas
        .iter()
        .map(|dl| {
            if dl.iter().any(|x| *x != 0.0) {
                Label::Local
            } else {
                Label::Inlier
            }
        })
        .collect();
    let s = PointSet::new(d, data)?.with_labels(labels)?;
    Ok((
        s,
        PerturbationSet {
            deltas,
            kind,
            rho,
            k,
            constructed_bound: bound,
        },
    ))
}

/// Replaces floor(eps*n) uniformly chosen points by outliers.
pub fn inject_global(
    s: &PointSet,
    eps: f64,
    strategy: &GlobalStrategy,
    rng: &mut ChaCha8Rng,
) -> Result<PointSet> {
    let (n, d) = (s.len(), s.dim());
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::invalid(format!("epsilon {eps} outside [0, 1/2)")));
    }
    let m = (eps * n as f64 + 1e-9).floor() as usize;
    let mut labels: Vec<Label> = s
        .labels()
        .map(|l| l.to_vec())
        .unwrap_or_else(|| vec![Label::Inlier; n]);
    if m == 0 || matches!(strategy, GlobalStrategy::None) {
        return s.clone().with_labels(labels);
    }
    let mu = s.mean();
    let chosen = rand::seq::index::sample(rng, n, m).into_vec();
    let mut chosen_sorted = chosen.clone();
    chosen_sorted.sort_unstable();
    let mut out = s.clone();
    for (slot, &i) in chosen_sorted.iter().enumerate() {
        let p: Vec<f64> = match strategy {
            GlobalStrategy::None => unreachable!(),
            GlobalStrategy::Cluster { direction, radius } => {
                let u = unit_direction(direction, d)?;
                mu.iter().zip(&u).map(|(a, b)| a + radius * b).collect()
            }
            GlobalStrategy::Antipodal { direction, radius } => {
                let u = unit_direction(direction, d)?;
                let sign = if slot % 2 == 0 { 1.0 } else { -1.0 };
                mu.iter().zip(&u).map(|(a, b)| a + sign * radius * b).collect()
            }
            GlobalStrategy::ResampleIsotropic { scale } => mu
                .iter()
                .map(|a| {
                    let z: f64 = StandardNormal.sample(rng);
                    a + scale * z
                })
                .collect(),
        };
        out.point_mut(i).copy_from_slice(&p);
        labels[i] = Label::Outlier;
    }
    out.with_labels(labels)
}

/// Runs a recipe: local perturbation first, then global replacement.
pub fn contaminate(s0: &PointSet, recipe: &ContaminationRecipe) -> Result<(PointSet, PerturbationSet)> {
    recipe.validate(s0.dim())?;
    let mut rng = crate::rng::seeded(recipe.seed);
    let (s, pert) = perturb_local(s0, recipe.rho, recipe.k, &recipe.local_strategy, &mut rng, None)?;
    let t = inject_global(&s, recipe.epsilon, &recipe.global_strategy, &mut rng)?;
    Ok((t, pert))
}

/// Certified lower bound on sup over rank-k projections V of
/// (1/n) sum ||V (x_i - x_i^0)||, with the projection attaining it.
pub fn certify_local_budget(
    s0: &PointSet,
    s: &PointSet,
    k: usize,
    restarts: usize,
    iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, ProjectionBudget)> {
    if s0.len() != s.len() || s0.dim() != s.dim() {
        return Err(Error::DimensionMismatch("clean and perturbed sets differ in shape".into()));
    }
    let d = s.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidRank { k, d });
    }
    let n = s.len();
    let flat: Vec<f64> = s.data().iter().zip(s0.data()).map(|(a, b)| a - b).collect();
    let w = vec![1.0 / n as f64; n];
    let (val, u) = max_projected_norm_sum(&flat, d, &w, k, restarts, iters, rng)?;
    Ok((
        val,
        ProjectionBudget {
            matrix: &u * u.transpose(),
            rank_budget: k,
            kind: BudgetKind::Projection,
        },
    ))
}

fn objective(ys: &[f64], d: usize, w: &[f64], u: &DMatrix<f64>) -> f64 {
    let k = u.ncols();
    let mut total = 0.0;
    for (i, y) in ys.chunks_exact(d).enumerate() {
        let mut sq = 0.0;
        for c in 0..k {
            let mut z = 0.0;
            for r in 0..d {
                z += u[(r, c)] * y[r];
            }
            sq += z * z;
        }
        total += w[i] * sq.sqrt();
    }
    total
}

/// Heuristic maximisation of sum_i w_i ||U^T y_i|| over d x k matrices with
/// orthonormal columns.
///
/// Alternates z_i = U^T y_i / ||U^T y_i|| with U = polar(sum_i w_i y_i z_i^T);
/// each step does not decrease the objective. Starts from the top-k
/// eigenvectors of sum w_i y_i y_i^T plus `restarts` random frames. Any
/// returned value is attained, hence a valid lower bound on the supremum.
pub fn max_projected_norm_sum(
    ys: &[f64],
    d: usize,
    w: &[f64],
    k: usize,
    restarts: usize,
    iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, DMatrix<f64>)> {
    if k == 0 || k > d {
        return Err(Error::InvalidRank { k, d });
    }
    let n = w.len();
    let mut m2 = DMatrix::zeros(d, d);
    for (i, y) in ys.chunks_exact(d).enumerate() {
        let yv = linalg::dvec(y);
        m2 += (&yv * yv.transpose()) * w[i];
    }
    let eig = linalg::sym_eigen(&m2)?;
    let mut starts = vec![linalg::leading_vectors(&eig, k)];
    for _ in 0..restarts {
        let g = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(rng));
        starts.push(linalg::orthonormalize(&g));
    }
    let mut best_val = f64::NEG_INFINITY;
    let mut best_u = starts[0].clone();
    for mut u in starts {
        let mut val = objective(ys, d, w, &u);
        for _ in 0..iters {
            let mut b = DMatrix::zeros(d, k);
            let mut any = false;
            for (i, y) in ys.chunks_exact(d).enumerate().take(n) {
                let mut z = vec![0.0; k];
                for (c, zc) in z.iter_mut().enumerate() {
                    for r in 0..d {
                        *zc += u[(r, c)] * y[r];
                    }
                }
                let nz = linalg::norm(&z);
                if nz <= 0.0 {
                    continue;
                }
                any = true;
                let s = w[i] / nz;
                for r in 0..d {
                    for c in 0..k {
                        b[(r, c)] += s * y[r] * z[c];
                    }
                }
            }
            if !any {
                break;
            }
            let next = linalg::polar_factor(&b)?;
            let next_val = objective(ys, d, w, &next);
            if next_val <= val * (1.0 + 1e-12) {
                if next_val > val {
                    u = next;
                    val = next_val;
                }
                break;
            }
            u = next;
            val = next_val;
        }
        if val > best_val {
            best_val = val;
            best_u = u;
        }
    }
    Ok((best_val.max(0.0), best_u))
}
