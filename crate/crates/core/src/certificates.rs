//! Bounded-subset certificates for locally perturbed data.
//!
//! The central object is the saddle problem
//!
//! ```text
//! min_{w in Delta_{n,eps}} max_{M in M_k} sum_i w_i Delta_i^T M Delta_i
//! ```
//!
//! over the capped simplex Delta_{n,eps} = {w >= 0, sum w = 1, w_i <= 1/((1-eps)n)}.
//! The objective is bilinear, the inner maximum is a top-k eigenvalue sum and
//! the inner minimum over w for fixed M is a sorted partial sum, so both sides
//! of the duality gap can be evaluated exactly.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::PointSet;

/// Weights on the capped simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub cap: f64,
}

impl WeightVector {
    pub fn uniform(n: usize, eps: f64) -> Self {
        WeightVector {
            weights: vec![1.0 / n as f64; n],
            cap: capped_simplex_cap(n, eps),
        }
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        let s: f64 = self.weights.iter().sum();
        (s - 1.0).abs() <= tol && self.weights.iter().all(|&w| w >= -tol && w <= self.cap + tol)
    }
}

pub fn capped_simplex_cap(n: usize, eps: f64) -> f64 {
    1.0 / ((1.0 - eps) * n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleResult {
    /// Best primal value max_M f(w, M) found.
    pub value: f64,
    /// Primal value minus the best certified dual value.
    pub gap: f64,
    pub iterations: usize,
    pub w: Vec<f64>,
    /// Dual certificate in M_k.
    #[serde(rename = "M", with = "crate::matrix_serde")]
    pub m: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleOptions {
    pub max_iters: usize,
    /// Stop once primal - dual <= tol * primal (scale free).
    pub tol: f64,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        SaddleOptions {
            max_iters: 20_000,
            tol: 1e-4,
        }
    }
}

struct Deltas {
    d: usize,
    rows: Vec<Vec<f64>>,
}

impl Deltas {
    fn weighted_outer(&self, w: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let mut acc = DMatrix::zeros(d, d);
        for (row, &wi) in self.rows.iter().zip(w) {
            if wi == 0.0 {
                continue;
            }
            for a in 0..d {
                let s = wi * row[a];
                for b in a..d {
                    acc[(a, b)] += s * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                acc[(a, b)] = acc[(b, a)];
            }
        }
        acc
    }

    fn quad(&self, m: &DMatrix<f64>) -> Vec<f64> {
        self.rows.iter().map(|r| linalg::quad_form(m, r)).collect()
    }
}

/// min over the capped simplex of sum w_i q_i: fill the smallest q first.
pub fn capped_min(q: &[f64], cap: f64) -> (f64, Vec<f64>) {
    let mut idx: Vec<usize> = (0..q.len()).collect();
    idx.sort_by(|&a, &b| q[a].partial_cmp(&q[b]).unwrap().then(a.cmp(&b)));
    let mut w = vec![0.0; q.len()];
    let mut left = 1.0f64;
    let mut val = 0.0;
    for &i in &idx {
        if left <= 0.0 {
            break;
        }
        let take = cap.min(left);
        w[i] = take;
        val += take * q[i];
        left -= take;
    }
    (val, w)
}

/// Solves the saddle problem by Euclidean mirror-prox (extragradient) on the
/// pair (w, M), with exact projections onto the capped simplex and M_k.
///
/// The certificate is read off the running averages: the primal value of the
/// averaged w is a top-k eigenvalue sum and the dual value of the averaged M a
/// sorted partial sum, so `gap` is an exact bound on suboptimality.
pub fn solve_saddle(deltas: &PointSet, eps: f64, k: usize, opts: SaddleOptions) -> Result<SaddleResult> {
    let (n, d) = (deltas.len(), deltas.dim());
    if n == 0 {
        return Err(Error::Empty);
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::invalid(format!("epsilon {eps} outside [0, 1)")));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidRank { k, d });
    }
    let del = Deltas {
        d,
        rows: deltas.rows(),
    };
    let cap = capped_simplex_cap(n, eps);
    // The w-block is rescaled so both blocks have comparable diameters.
    let dw = (2.0 * cap).sqrt();
    let dm = (2.0 * k as f64).sqrt();
    let lip: f64 = del.rows.iter().map(|r| linalg::dot(r, r).powi(2)).sum::<f64>().sqrt();
    let eta = if lip > 0.0 { 0.9 / lip } else { 1.0 };
    let (eta_w, eta_m) = (eta * dw / dm, eta * dm / dw);

    let mut w = vec![1.0 / n as f64; n];
    let mut m = DMatrix::identity(d, d) * (k as f64 / d as f64);
    let mut sum_w = vec![0.0; n];
    let mut sum_m = DMatrix::zeros(d, d);
    let mut best_primal = f64::INFINITY;
    let mut best_w = w.clone();
    let mut best_dual = f64::NEG_INFINITY;
    let mut best_m = m.clone();
    let mut iterations = 0;

    for t in 1..=opts.max_iters.max(1) {
        iterations = t;
        let g = del.quad(&m);
        let a = del.weighted_outer(&w);
        let w_half = step_w(&w, &g, eta_w, cap);
        let m_half = linalg::project_spectahedron(&(&m + &a * eta_m), k)?;
        let g_half = del.quad(&m_half);
        let a_half = del.weighted_outer(&w_half);
        w = step_w(&w, &g_half, eta_w, cap);
        m = linalg::project_spectahedron(&(&m + &a_half * eta_m), k)?;
        for (s, x) in sum_w.iter_mut().zip(&w_half) {
            *s += x;
        }
        sum_m += &m_half;

        if t % 10 == 0 || t == opts.max_iters || t == 1 {
            let wbar: Vec<f64> = sum_w.iter().map(|x| x / t as f64).collect();
            let mbar = &sum_m / t as f64;
            for cand in [&wbar, &w_half] {
                let pv = linalg::top_k_sum(&del.weighted_outer(cand), k)?;
                if pv < best_primal {
                    best_primal = pv;
                    best_w = cand.clone();
                }
            }
            for cand in [mbar, m_half] {
                let (dv, _) = capped_min(&del.quad(&cand), cap);
                if dv > best_dual {
                    best_dual = dv;
                    best_m = cand;
                }
            }
            if best_primal - best_dual <= opts.tol * best_primal.abs() {
                break;
            }
        }
    }
    Ok(SaddleResult {
        value: best_primal,
        gap: (best_primal - best_dual).max(0.0),
        iterations,
        w: best_w,
        m: best_m,
    })
}

fn step_w(w: &[f64], g: &[f64], eta: f64, cap: f64) -> Vec<f64> {
    let moved: Vec<f64> = w.iter().zip(g).map(|(wi, gi)| wi - eta * gi).collect();
    linalg::project_capped_simplex(&moved, cap, 1.0)
}

/// Keeps the n - floor(2 eps n) indices with the largest weights (ties to the
/// lower index), returned in increasing order.
pub fn round_weights(w: &[f64], eps: f64) -> Vec<usize> {
    let n = w.len();
    let keep = n - ((2.0 * eps * n as f64) + 1e-9).floor().min(n as f64) as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap().then(a.cmp(&b)));
    let mut out = idx[..keep].to_vec();
    out.sort_unstable();
    out
}

/// Finds a large subset on which the displacements have small k-sliced
/// second moment. Returns the subset and sup_M (1/|I|) sum_{i in I} Delta_i^T M Delta_i.
pub fn find_bounded_subset(deltas: &PointSet, eps: f64, k: usize) -> Result<(Vec<usize>, f64)> {
    let res = solve_saddle(deltas, eps, k, SaddleOptions::default())?;
    let idx = round_weights(&res.w, eps);
    let sub = deltas.subset(&idx);
    let m2 = linalg::second_moment_about(sub.points(), &vec![0.0; deltas.dim()], sub.len());
    let cert = linalg::top_k_sum(&m2, k)?;
    Ok((idx, cert))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedSup {
    pub value: f64,
    /// Frank-Wolfe duality gap: value + gap bounds the supremum from above.
    pub gap: f64,
    pub iterations: usize,
    #[serde(rename = "M", with = "crate::matrix_serde")]
    pub m: DMatrix<f64>,
}

fn relaxed_objective(ys: &[Vec<f64>], m: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let q: Vec<f64> = ys.iter().map(|y| linalg::quad_form(m, y).max(0.0)).collect();
    let v = q.iter().map(|x| x.sqrt()).sum::<f64>() / ys.len() as f64;
    (v, q)
}

/// Gradient of the relaxed objective; zero-norm terms are dropped.
fn relaxed_gradient(rows: &[Vec<f64>], q: &[f64], d: usize) -> DMatrix<f64> {
    let n = rows.len() as f64;
    let mut grad = DMatrix::zeros(d, d);
    for (y, &qi) in rows.iter().zip(q) {
        if qi <= 0.0 {
            continue;
        }
        let yv = linalg::dvec(y);
        grad += (&yv * yv.transpose()) * (1.0 / (2.0 * qi.sqrt() * n));
    }
    grad
}

/// Frank-Wolfe maximisation of (1/n) sum sqrt(y_i^T M y_i) over M_k.
///
/// The objective is concave; the linear oracle is the top-k eigenprojection of
/// the gradient (1/n) sum y y^T / (2 ||y||_M) and the line search is exact.
pub fn sup_relaxed_avg_norm(ys: &PointSet, k: usize, max_iters: usize, tol: f64) -> Result<RelaxedSup> {
    let (n, d) = (ys.len(), ys.dim());
    if n == 0 {
        return Err(Error::Empty);
    }
    if k == 0 || k > d {
        return Err(Error::InvalidRank { k, d });
    }
    let rows = ys.rows();
    let mut m = DMatrix::identity(d, d) * (k as f64 / d as f64);
    let (mut value, mut q) = relaxed_objective(&rows, &m);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut pg_step = 1.0;
    for it in 0..max_iters.max(1) {
        iterations = it + 1;
        let grad = relaxed_gradient(&rows, &q, d);
        let (_, s) = linalg::top_k_budget(&grad, k)?;
        let dir = &s.matrix - &m;
        gap = linalg::frob_dot(&dir, &grad).max(0.0);
        if gap <= tol * (1.0 + value) {
            break;
        }
        // phi(g) = (1/n) sum sqrt(a_i + g b_i) is concave on [0, 1].
        let b: Vec<f64> = rows.iter().map(|y| linalg::quad_form(&dir, y)).collect();
        let dphi = |g: f64| -> f64 {
            q.iter()
                .zip(&b)
                .map(|(&a, &bi)| {
                    let v = (a + g * bi).max(0.0);
                    if v > 0.0 {
                        bi / (2.0 * v.sqrt())
                    } else if bi > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
        };
        let step = if dphi(1.0) >= 0.0 {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if dphi(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let next = &m + &dir * step;
        let (nv, nq) = relaxed_objective(&rows, &next);
        if nv < value {
            break;
        }
        m = next;
        value = nv;
        q = nq;
        // Projected gradient polish: near a face plain Frank-Wolfe zig-zags.
        // Accepted only on ascent, so the iterates stay monotone.
        let grad = relaxed_gradient(&rows, &q, d);
        while pg_step > 1e-12 {
            let cand = linalg::project_spectahedron(&(&m + &grad * pg_step), k)?;
            let (cv, cq) = relaxed_objective(&rows, &cand);
            if cv > value {
                m = cand;
                value = cv;
                q = cq;
                pg_step *= 2.0;
                break;
            }
            pg_step *= 0.5;
        }
    }
    Ok(RelaxedSup {
        value,
        gap,
        iterations,
        m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusStats {
    pub r: f64,
    /// Mean of Z = (1/n) sum ||y_i||_B * 1[B in B_r].
    pub mean_z: f64,
    pub se_z: f64,
    /// Frequency of ||B - M||_op > r - 1.
    pub exceed_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub trials: usize,
    /// (1/n) sum ||y_i||_M.
    pub relaxed_value: f64,
    pub rank_k_fraction: f64,
    pub min_rank: usize,
    pub max_rank: usize,
    /// Empirical mean of ||B - M||_op.
    pub mean_deviation: f64,
    pub per_radius: Vec<RadiusStats>,
}

/// Empirical study of the Gaussian rounding B = (1/k) sum_{j<=k} g_j g_j^T with
/// g_j ~ N(0, M), the random rank-k matrix used to pass from M_k back to
/// projections.
pub fn gaussian_rounding_probe(
    ys: &PointSet,
    m: &DMatrix<f64>,
    k: usize,
    trials: usize,
    radii: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<ProbeStats> {
    let (n, d) = (ys.len(), ys.dim());
    if n == 0 {
        return Err(Error::Empty);
    }
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch("M does not match point dimension".into()));
    }
    if k == 0 || k > d || trials == 0 {
        return Err(Error::InvalidRank { k, d });
    }
    let root = linalg::psd_sqrt(m, 1e-8)?;
    let rows = ys.rows();
    let relaxed_value = rows.iter().map(|y| linalg::quad_form(m, y).max(0.0).sqrt()).sum::<f64>() / n as f64;
    let mut rank_hits = 0usize;
    let mut min_rank = usize::MAX;
    let mut max_rank = 0usize;
    let mut dev_sum = 0.0;
    let mut z_sum = vec![0.0; radii.len()];
    let mut z_sq = vec![0.0; radii.len()];
    let mut exceed = vec![0usize; radii.len()];
    for _ in 0..trials {
        let gs: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                linalg::mat_vec(&root, &z)
            })
            .collect();
        let mut b = DMatrix::zeros(d, d);
        for g in &gs {
            let gv = linalg::dvec(g);
            b += (&gv * gv.transpose()) * (1.0 / k as f64);
        }
        let rank = linalg::numerical_rank(&b, 1e-10)?;
        min_rank = min_rank.min(rank);
        max_rank = max_rank.max(rank);
        if rank == k {
            rank_hits += 1;
        }
        let b_norm = linalg::op_norm_sym(&b)?;
        let dev = linalg::op_norm_sym(&(&b - m))?;
        dev_sum += dev;
        let avg_norm = rows
            .iter()
            .map(|y| (gs.iter().map(|g| linalg::dot(g, y).powi(2)).sum::<f64>() / k as f64).sqrt())
            .sum::<f64>()
            / n as f64;
        for (j, &r) in radii.iter().enumerate() {
            let z = if rank == k && b_norm <= r { avg_norm } else { 0.0 };
            z_sum[j] += z;
            z_sq[j] += z * z;
            if dev > r - 1.0 {
                exceed[j] += 1;
            }
        }
    }
    let t = trials as f64;
    let per_radius = radii
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let mean = z_sum[j] / t;
            let var = (z_sq[j] / t - mean * mean).max(0.0);
            RadiusStats {
                r,
                mean_z: mean,
                se_z: (var / t).sqrt(),
                exceed_frequency: exceed[j] as f64 / t,
            }
        })
        .collect();
    Ok(ProbeStats {
        trials,
        relaxed_value,
        rank_k_fraction: rank_hits as f64 / t,
        min_rank,
        max_rank,
        mean_deviation: dev_sum / t,
        per_radius,
    })
}
