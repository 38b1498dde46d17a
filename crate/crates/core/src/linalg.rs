//! Spectral primitives over the spectahedron M_k = {0 <= M <= I, tr M = k}.
//!
//! The linear maximiser of <M, A> over M_k is the projection onto the top-k
//! eigenspace of A, so most "sup over projections" quantities reduce to
//! sorted eigenvalue sums.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::types::{BudgetKind, MomentSummary, PointSet, ProjectionBudget};

/// Eigenpairs sorted by decreasing eigenvalue; ties keep the solver's order.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the same order as `values`.
    pub vectors: DMatrix<f64>,
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(a: &DMatrix<f64>, tol: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let asym = max_asymmetry(a);
    let scale = 1.0 + a.abs().max();
    if asym > tol * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SortedEigen> {
    let n = a.nrows();
    if n == 0 {
        return Ok(SortedEigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    // Symmetrise to absorb rounding noise before decomposing.
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, 1e-14, 10_000).ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(SortedEigen { values, vectors })
}

/// Orthogonal projection onto the span of the given columns of `vectors`.
pub fn projection_from_columns(vectors: &DMatrix<f64>, cols: impl Iterator<Item = usize>) -> DMatrix<f64> {
    let d = vectors.nrows();
    let mut p = DMatrix::zeros(d, d);
    for c in cols {
        let v = vectors.column(c);
        p += v * v.transpose();
    }
    p
}

fn check_rank(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        Err(Error::InvalidRank { k, d })
    } else {
        Ok(())
    }
}

/// sup over M in M_k of <M, A>: the sum of the top-k eigenvalues, attained by
/// the projection onto the top-k eigenspace.
pub fn top_k_budget(a: &DMatrix<f64>, k: usize) -> Result<(f64, ProjectionBudget)> {
    check_symmetric(a, 1e-8)?;
    check_rank(k, a.nrows())?;
    let eig = sym_eigen(a)?;
    let value = eig.values[..k].iter().sum();
    let matrix = projection_from_columns(&eig.vectors, 0..k);
    Ok((
        value,
        ProjectionBudget {
            matrix,
            rank_budget: k,
            kind: BudgetKind::Projection,
        },
    ))
}

/// Sum of the top-k eigenvalues without forming the witness.
pub fn top_k_sum(a: &DMatrix<f64>, k: usize) -> Result<f64> {
    check_rank(k, a.nrows())?;
    let eig = sym_eigen(a)?;
    Ok(eig.values[..k].iter().sum())
}

/// sup over M in M_k of |<M, A>| = max(top-k sum, |bottom-k sum|).
pub fn signed_extreme_budget(a: &DMatrix<f64>, k: usize) -> Result<f64> {
    Ok(signed_extreme_with_witness(a, k)?.0)
}

/// Like [`signed_extreme_budget`] but also returns the maximising projection.
pub fn signed_extreme_with_witness(a: &DMatrix<f64>, k: usize) -> Result<(f64, ProjectionBudget)> {
    check_symmetric(a, 1e-8)?;
    let d = a.nrows();
    check_rank(k, d)?;
    let eig = sym_eigen(a)?;
    let top: f64 = eig.values[..k].iter().sum();
    let bottom: f64 = eig.values[d - k..].iter().sum();
    let (value, matrix) = if top >= -bottom {
        (top, projection_from_columns(&eig.vectors, 0..k))
    } else {
        (-bottom, projection_from_columns(&eig.vectors, d - k..d))
    };
    Ok((
        value,
        ProjectionBudget {
            matrix,
            rank_budget: k,
            kind: BudgetKind::Projection,
        },
    ))
}

/// Mean, covariance and (optionally) the second moment about `center`.
pub fn moment_summary(s: &PointSet, center: Option<&[f64]>) -> Result<MomentSummary> {
    if s.is_empty() {
        return Err(Error::Empty);
    }
    let d = s.dim();
    if let Some(c) = center {
        if c.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "centre has length {}, points have dimension {d}",
                c.len()
            )));
        }
    }
    let mean = s.mean();
    let covariance = second_moment_about(s.points(), &mean, s.len());
    let centered_second_moment = match center {
        Some(c) => second_moment_about(s.points(), c, s.len()),
        None => covariance.clone(),
    };
    Ok(MomentSummary {
        mean,
        covariance,
        centered_second_moment,
        n: s.len(),
    })
}

/// (1/n) sum (x - c)(x - c)^T over the given points.
pub fn second_moment_about<'a>(pts: impl Iterator<Item = &'a [f64]>, c: &[f64], n: usize) -> DMatrix<f64> {
    let d = c.len();
    let mut acc = vec![0.0; d * d];
    let mut y = vec![0.0; d];
    for p in pts {
        for j in 0..d {
            y[j] = p[j] - c[j];
        }
        for a in 0..d {
            let ya = y[a];
            let row = &mut acc[a * d..(a + 1) * d];
            for b in a..d {
                row[b] += ya * y[b];
            }
        }
    }
    let mut m = DMatrix::zeros(d, d);
    let inv = if n > 0 { 1.0 / n as f64 } else { 0.0 };
    for a in 0..d {
        for b in a..d {
            let v = acc[a * d + b] * inv;
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// Covariance of the rows of `s` selected by `idx`, normalised by |idx|.
pub fn covariance_of(s: &PointSet, idx: &[usize]) -> (Vec<f64>, DMatrix<f64>) {
    let d = s.dim();
    let mean = crate::types::mean_of(idx.iter().map(|&i| s.point(i)), d, idx.len());
    let cov = second_moment_about(idx.iter().map(|&i| s.point(i)), &mean, idx.len());
    (mean, cov)
}

/// x^T M x.
pub fn quad_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let d = x.len();
    let mut s = 0.0;
    for a in 0..d {
        let mut row = 0.0;
        for b in 0..d {
            row += m[(a, b)] * x[b];
        }
        s += x[a] * row;
    }
    s
}

/// Frobenius inner product.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn op_norm_sym(a: &DMatrix<f64>) -> Result<f64> {
    let eig = sym_eigen(a)?;
    Ok(eig
        .values
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Applies f to the eigenvalues of a symmetric matrix.
pub fn sym_apply(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(a)?;
    let d = a.nrows();
    let mut out = DMatrix::zeros(d, d);
    for (c, &lam) in eig.values.iter().enumerate() {
        let v = eig.vectors.column(c);
        out += (v * v.transpose()) * f(lam);
    }
    Ok(out)
}

/// Symmetric PSD square root; rejects matrices with clearly negative eigenvalues.
pub fn psd_sqrt(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    check_symmetric(a, tol)?;
    let eig = sym_eigen(a)?;
    let scale = 1.0 + eig.values.first().copied().unwrap_or(0.0).abs();
    if let Some(&lo) = eig.values.last() {
        if lo < -tol * scale {
            return Err(Error::NotPsd(lo));
        }
    }
    sym_apply(a, |l| l.max(0.0).sqrt())
}

/// Inverse PSD square root; requires a strictly positive spectrum.
pub fn psd_inv_sqrt(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    check_symmetric(a, tol)?;
    let eig = sym_eigen(a)?;
    let lo = eig.values.last().copied().unwrap_or(0.0);
    if lo <= tol {
        return Err(Error::NotPsd(lo));
    }
    sym_apply(a, |l| 1.0 / l.sqrt())
}

/// Euclidean projection onto {x : 0 <= x_i <= cap, sum x = total}.
///
/// Water-filling: find t with sum clamp(v_i - t, 0, cap) = total by bisection
/// on the monotone map, then clamp.
pub fn project_capped_simplex(v: &[f64], cap: f64, total: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n as f64 * cap >= total - 1e-12, "capped simplex is empty");
    let mass = |t: f64| -> f64 { v.iter().map(|&x| (x - t).clamp(0.0, cap)).sum() };
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut lo = vmin - cap - 1.0;
    let mut hi = vmax;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > total {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let mut x: Vec<f64> = v.iter().map(|&a| (a - t).clamp(0.0, cap)).collect();
    // Distribute the residual on coordinates strictly inside (0, cap).
    let resid = total - x.iter().sum::<f64>();
    if resid.abs() > 0.0 {
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                if resid > 0.0 {
                    x[i] < cap
                } else {
                    x[i] > 0.0
                }
            })
            .collect();
        if !free.is_empty() {
            let share = resid / free.len() as f64;
            for i in free {
                x[i] = (x[i] + share).clamp(0.0, cap);
            }
        }
    }
    x
}

/// Projection onto M_k in Frobenius norm: project the spectrum onto the capped simplex.
pub fn project_spectahedron(a: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    check_rank(k, a.nrows())?;
    let eig = sym_eigen(a)?;
    let lam = project_capped_simplex(&eig.values, 1.0, k as f64);
    let d = a.nrows();
    let mut out = DMatrix::zeros(d, d);
    for (c, &l) in lam.iter().enumerate() {
        if l != 0.0 {
            let v = eig.vectors.column(c);
            out += (v * v.transpose()) * l;
        }
    }
    Ok(out)
}

/// Orthonormal polar factor of a tall matrix (U V^T from the thin SVD).
pub fn polar_factor(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = b.clone().try_svd(true, true, 1e-14, 10_000).ok_or(Error::EigenFailure)?;
    let u = svd.u.ok_or(Error::EigenFailure)?;
    let vt = svd.v_t.ok_or(Error::EigenFailure)?;
    Ok(u * vt)
}

/// Gram-Schmidt orthonormalisation of the columns (QR).
pub fn orthonormalize(b: &DMatrix<f64>) -> DMatrix<f64> {
    b.clone().qr().q()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Applies a square matrix to a vector.
pub fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let d = m.nrows();
    (0..d)
        .map(|a| (0..x.len()).map(|b| m[(a, b)] * x[b]).sum())
        .collect()
}

/// Columns 0..k of the sorted eigenvectors as a d x k matrix.
pub fn leading_vectors(eig: &SortedEigen, k: usize) -> DMatrix<f64> {
    eig.vectors.columns(0, k).into_owned()
}

/// Rank of a symmetric matrix counting eigenvalues above `rel_tol * max|lambda|`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    let eig = sym_eigen(a)?;
    let top = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return Ok(0);
    }
    Ok(eig.values.iter().filter(|v| v.abs() > rel_tol * top).count())
}
