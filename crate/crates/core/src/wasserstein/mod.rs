//! Wasserstein distances between finite multisets with uniform weights.
//!
//! `w_p_fixed_projection` is exact: a transport plan between multisets of
//! sizes m and n is found by the 1-D quantile coupling, by an assignment solver
//! after replicating both sets to a common size, or by the transportation
//! simplex. `sliced_w_p` returns a bracket on the max-sliced distance
//! sup_V W_p(V A, V B): any projection gives a lower bound and V = I gives the
//! upper bound.

pub mod assignment;
pub mod transport;

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::PointSet;

/// Largest common size accepted by [`replicate_to_common_size`].
pub const MAX_COMMON_SIZE: u64 = 1_000_000;
/// Above this common size the transportation simplex is used instead of replication.
const REPLICATE_LIMIT: u64 = 400;

/// One cell of a transport plan; masses sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupled {
    pub a: usize,
    pub b: usize,
    pub mass: f64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Repeats every point of A lcm/|A| times and of B lcm/|B| times.
pub fn replicate_to_common_size(a: &PointSet, b: &PointSet) -> Result<(PointSet, PointSet)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty);
    }
    let l = lcm(a.len() as u64, b.len() as u64);
    if l > MAX_COMMON_SIZE {
        return Err(Error::WorkLimit(format!(
            "common size {l} exceeds {MAX_COMMON_SIZE}; use the transportation solver"
        )));
    }
    let rep = |s: &PointSet| -> PointSet {
        let times = l as usize / s.len();
        let idx: Vec<usize> = (0..s.len()).flat_map(|i| std::iter::repeat_n(i, times)).collect();
        s.subset(&idx).without_labels()
    };
    Ok((rep(a), rep(b)))
}

/// Exact W_p between two 1-D samples with uniform weights.
pub fn w_p_1d(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    let (cost, _) = plan_1d(a, b, p)?;
    Ok(cost.powf(1.0 / p))
}

/// Quantile coupling: returns sum of mass * |a - b|^p and the plan.
fn plan_1d(a: &[f64], b: &[f64], p: f64) -> Result<(f64, Vec<Coupled>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty);
    }
    check_p(p)?;
    let (m, n) = (a.len(), b.len());
    let mut ia: Vec<usize> = (0..m).collect();
    let mut ib: Vec<usize> = (0..n).collect();
    ia.sort_by(|&x, &y| a[x].partial_cmp(&a[y]).unwrap().then(x.cmp(&y)));
    ib.sort_by(|&x, &y| b[x].partial_cmp(&b[y]).unwrap().then(x.cmp(&y)));
    // Integer masses: each a-point carries n units, each b-point m units.
    let total = (m * n) as f64;
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (n as u64, m as u64);
    let mut cost = 0.0;
    let mut plan = Vec::with_capacity(m + n);
    while i < m && j < n {
        let f = ra.min(rb);
        let mass = f as f64 / total;
        cost += mass * (a[ia[i]] - b[ib[j]]).abs().powf(p);
        plan.push(Coupled { a: ia[i], b: ib[j], mass });
        ra -= f;
        rb -= f;
        if ra == 0 {
            i += 1;
            ra = n as u64;
        }
        if rb == 0 {
            j += 1;
            rb = m as u64;
        }
    }
    Ok((cost, plan))
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("p = {p} must be a finite value >= 1")));
    }
    Ok(())
}

/// Coordinates of the points after applying V, reduced to the range of V when
/// V is symmetric (so the transport costs only touch rank(V) coordinates).
fn project(s: &PointSet, v: &DMatrix<f64>) -> Result<(Vec<f64>, usize)> {
    let d = s.dim();
    if v.nrows() != d || v.ncols() != d {
        return Err(Error::DimensionMismatch("projection does not match dimension".into()));
    }
    let sym = linalg::max_asymmetry(v) <= 1e-10 * (1.0 + v.abs().max());
    let basis: DMatrix<f64> = if sym {
        let eig = linalg::sym_eigen(v)?;
        let scale = eig.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let keep: Vec<usize> = (0..d).filter(|&c| eig.values[c].abs() > 1e-12 * scale.max(1e-300)).collect();
        let mut b = DMatrix::zeros(keep.len(), d);
        for (r, &c) in keep.iter().enumerate() {
            for j in 0..d {
                b[(r, j)] = eig.values[c] * eig.vectors[(j, c)];
            }
        }
        b
    } else {
        v.clone()
    };
    let r = basis.nrows();
    let mut out = Vec::with_capacity(s.len() * r.max(1));
    for x in s.points() {
        for i in 0..r {
            out.push((0..d).map(|j| basis[(i, j)] * x[j]).sum());
        }
    }
    Ok((out, r))
}

fn dist_p(x: &[f64], y: &[f64], p: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if p == 2.0 {
        sq
    } else {
        sq.sqrt().powf(p)
    }
}

/// Exact optimal plan between projected coordinates (row-major, `r` columns).
/// Returns sum of mass * cost and the plan.
fn exact_plan(pa: &[f64], pb: &[f64], r: usize, m: usize, n: usize, p: f64) -> Result<(f64, Vec<Coupled>)> {
    if r == 0 {
        return Ok((0.0, vec![Coupled { a: 0, b: 0, mass: 1.0 }]));
    }
    if r == 1 {
        return plan_1d(pa, pb, p);
    }
    let ra = |i: usize| &pa[i * r..(i + 1) * r];
    let rb = |j: usize| &pb[j * r..(j + 1) * r];
    let l = lcm(m as u64, n as u64);
    if l <= REPLICATE_LIMIT {
        let (ta, tb) = (l as usize / m, l as usize / n);
        let (assign, total) = assignment::solve_assignment(l as usize, |i, j| dist_p(ra(i / ta), rb(j / tb), p));
        let mass = 1.0 / l as f64;
        let plan = assign
            .iter()
            .enumerate()
            .map(|(i, &j)| Coupled { a: i / ta, b: j / tb, mass })
            .collect();
        return Ok((total * mass, plan));
    }
    if (m as u64) * (n as u64) > 40_000_000 {
        return Err(Error::WorkLimit(format!("{m} x {n} transport problem is too large")));
    }
    let mut cost = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            cost.push(dist_p(ra(i), rb(j), p));
        }
    }
    let g = gcd(m as u64, n as u64);
    let supply = vec![n as u64 / g; m];
    let demand = vec![m as u64 / g; n];
    let (flows, total) = transport::solve_transport(&supply, &demand, cost)?;
    let scale = 1.0 / (m as u64 / g * n as u64) as f64;
    let plan = flows
        .iter()
        .map(|f| Coupled { a: f.row, b: f.col, mass: f.amount as f64 * scale })
        .collect();
    Ok((total * scale, plan))
}

/// Exact W_p(V A, V B) for a fixed matrix V.
pub fn w_p_fixed_projection(a: &PointSet, b: &PointSet, v: &DMatrix<f64>, p: f64) -> Result<f64> {
    Ok(plan_fixed_projection(a, b, v, p)?.0.powf(1.0 / p))
}

/// Exact optimal plan for the costs ||V(a_i - b_j)||^p; returns (sum of mass*cost, plan).
pub fn plan_fixed_projection(a: &PointSet, b: &PointSet, v: &DMatrix<f64>, p: f64) -> Result<(f64, Vec<Coupled>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty);
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch("point sets differ in dimension".into()));
    }
    check_p(p)?;
    let (pa, r) = project(a, v)?;
    let (pb, _) = project(b, v)?;
    exact_plan(&pa, &pb, r, a.len(), b.len(), p)
}

/// Exact W_p(A, B) in the full space.
pub fn w_p(a: &PointSet, b: &PointSet, p: f64) -> Result<f64> {
    let d = a.dim();
    w_p_fixed_projection(a, b, &DMatrix::identity(d, d), p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicedBound {
    /// Exact W_p at the best projection found.
    pub lower: f64,
    /// Exact W_p without projection.
    pub upper: f64,
    pub k: usize,
    pub p: f64,
    #[serde(rename = "witness_V", with = "crate::matrix_serde")]
    pub witness_v: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicedOptions {
    /// Random starting frames on top of the data-driven ones.
    pub restarts: usize,
    /// Plan/frame alternations per start.
    pub iters: usize,
    /// Cap on exact projected solves for the lower bound.
    pub max_solves: usize,
}

impl Default for SlicedOptions {
    fn default() -> Self {
        SlicedOptions { restarts: 2, iters: 4, max_solves: 24 }
    }
}

fn frame_projection(u: &DMatrix<f64>) -> DMatrix<f64> {
    u * u.transpose()
}

/// Best rank-k frame for a fixed plan: exact (top eigenvectors) for p = 2, the
/// rounded concave relaxation or the alternating polar iteration otherwise.
fn best_frame_for_plan(
    a: &PointSet,
    b: &PointSet,
    plan: &[Coupled],
    k: usize,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DMatrix<f64>>> {
    let d = a.dim();
    let diffs: Vec<Vec<f64>> = plan.iter().map(|c| linalg::sub(a.point(c.a), b.point(c.b))).collect();
    let mut scatter = DMatrix::zeros(d, d);
    for (c, y) in plan.iter().zip(&diffs) {
        let yv = linalg::dvec(y);
        scatter += (&yv * yv.transpose()) * c.mass;
    }
    let eig = linalg::sym_eigen(&scatter)?;
    let mut frames = vec![linalg::leading_vectors(&eig, k)];
    if p != 2.0 {
        let flat: Vec<f64> = diffs.concat();
        let w: Vec<f64> = plan.iter().map(|c| c.mass).collect();
        let (_, u) = crate::adversaries::max_projected_norm_sum(&flat, d, &w, k, 0, 30, rng)?;
        frames.push(u);
        // Concave relaxation over M_k (mass-weighted rows), rounded to the top-k
        // eigenspace of the final gradient.
        let weighted: Vec<Vec<f64>> = diffs
            .iter()
            .zip(plan)
            .map(|(y, c)| y.iter().map(|x| x * c.mass * plan.len() as f64).collect())
            .collect();
        if let Ok(ps) = PointSet::from_rows(&weighted) {
            if let Ok(rel) = crate::certificates::sup_relaxed_avg_norm(&ps, k, 200, 1e-4) {
                let mut grad = DMatrix::zeros(d, d);
                for y in &weighted {
                    let q = linalg::quad_form(&rel.m, y);
                    if q > 0.0 {
                        let yv = linalg::dvec(y);
                        grad += (&yv * yv.transpose()) * (1.0 / (2.0 * q.sqrt()));
                    }
                }
                let ge = linalg::sym_eigen(&grad)?;
                frames.push(linalg::leading_vectors(&ge, k));
            }
        }
    }
    Ok(frames)
}

/// Bracket on the max-sliced distance sup over rank-k projections V of W_p(VA, VB).
///
/// The lower bound alternates between an exact plan for the current V and the
/// best V for that plan, from a data-driven start and `restarts` random
/// frames; every candidate is scored by an exact solve, so the result is
/// attained by `witness_V`. The upper bound is the exact unprojected W_p.
pub fn sliced_w_p(
    a: &PointSet,
    b: &PointSet,
    k: usize,
    p: f64,
    opts: SlicedOptions,
    rng: &mut ChaCha8Rng,
) -> Result<SlicedBound> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty);
    }
    let d = a.dim();
    let full = plan_fixed_projection(a, b, &DMatrix::identity(d, d), p)?;
    sliced_w_p_with_plan(a, b, k, p, &full, opts, rng)
}

/// As [`sliced_w_p`], reusing an optimal unprojected plan `full` = (cost, plan)
/// from [`plan_fixed_projection`] with V = I.
pub fn sliced_w_p_with_plan(
    a: &PointSet,
    b: &PointSet,
    k: usize,
    p: f64,
    full: &(f64, Vec<Coupled>),
    opts: SlicedOptions,
    rng: &mut ChaCha8Rng,
) -> Result<SlicedBound> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty);
    }
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::DimensionMismatch("point sets differ in dimension".into()));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidRank { k, d });
    }
    check_p(p)?;
    let identity = DMatrix::identity(d, d);
    let (upper_cost, full_plan) = full;
    let upper = upper_cost.max(0.0).powf(1.0 / p);
    if k == d {
        return Ok(SlicedBound { lower: upper, upper, k, p, witness_v: identity });
    }

    let mut starts = best_frame_for_plan(a, b, full_plan, k, p, rng)?;
    let mean_diff = linalg::sub(&a.mean(), &b.mean());
    if linalg::norm(&mean_diff) > 0.0 {
        let mut g = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(rng));
        g.set_column(0, &linalg::dvec(&mean_diff));
        starts.push(linalg::orthonormalize(&g));
    }
    for _ in 0..opts.restarts {
        let g = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(rng));
        starts.push(linalg::orthonormalize(&g));
    }

    let budget = opts.max_solves.max(1);
    let mut solves = 0usize;
    let mut best_cost = f64::NEG_INFINITY;
    let mut best_v = frame_projection(&starts[0]);
    'starts: for u in starts {
        if solves >= budget {
            break;
        }
        let mut v = frame_projection(&u);
        let (mut cost, mut plan) = plan_fixed_projection(a, b, &v, p)?;
        solves += 1;
        if cost > best_cost {
            best_cost = cost;
            best_v = v.clone();
        }
        for _ in 0..opts.iters {
            let frames = best_frame_for_plan(a, b, &plan, k, p, rng)?;
            let mut improved = false;
            for f in frames {
                if solves >= budget {
                    break 'starts;
                }
                let cand = frame_projection(&f);
                let (c, pl) = plan_fixed_projection(a, b, &cand, p)?;
                solves += 1;
                if c > cost * (1.0 + 1e-10) + 1e-300 {
                    cost = c;
                    plan = pl;
                    v = cand;
                    improved = true;
                    if cost > best_cost {
                        best_cost = cost;
                        best_v = v.clone();
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    let lower = best_cost.max(0.0).powf(1.0 / p);
    Ok(SlicedBound { lower, upper, k, p, witness_v: best_v })
}
