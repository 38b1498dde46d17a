//! Point sets, labels, projection budgets and algorithm constants.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance of a point after contamination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inlier,
    Local,
    Outlier,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Inlier => "inlier",
            Label::Local => "local",
            Label::Outlier => "outlier",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s.trim() {
            "inlier" => Some(Label::Inlier),
            "local" => Some(Label::Local),
            "outlier" => Some(Label::Outlier),
            _ => None,
        }
    }

    /// Inliers and locally perturbed points both belong to the perturbed clean set.
    pub fn is_clean(self) -> bool {
        !matches!(self, Label::Outlier)
    }
}

/// A finite multiset of points in R^d stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
    labels: Option<Vec<Label>>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not split into rows of length {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        Ok(PointSet {
            dim,
            data,
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or(Error::Empty)?;
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        PointSet::new(dim, rows.concat())
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> Option<Label> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Sub-multiset indexed by `idx` (labels follow the points).
    pub fn subset(&self, idx: &[usize]) -> PointSet {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.point(i));
        }
        PointSet {
            dim: self.dim,
            data,
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Indices of points whose label is not `outlier`. Unlabelled sets count as clean.
    pub fn clean_indices(&self) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..self.len()).filter(|&i| l[i].is_clean()).collect(),
            None => (0..self.len()).collect(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.points().map(|p| p.to_vec()).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        mean_of(self.points(), self.dim, self.len())
    }
}

pub(crate) fn mean_of<'a>(pts: impl Iterator<Item = &'a [f64]>, d: usize, n: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for p in pts {
        for (a, b) in m.iter_mut().zip(p) {
            *a += b;
        }
    }
    if n > 0 {
        m.iter_mut().for_each(|a| *a /= n as f64);
    }
    m
}

/// Which budget a projection matrix certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    /// A rank-k orthogonal projection.
    Projection,
    /// An element of the spectahedron {0 <= M <= I, tr M = k}.
    Relaxed,
}

/// A rank-k projection or a relaxed spectahedron element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBudget {
    #[serde(with = "crate::matrix_serde")]
    pub matrix: DMatrix<f64>,
    pub rank_budget: usize,
    pub kind: BudgetKind,
}

impl ProjectionBudget {
    /// Checks the defining constraints up to `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let m = &self.matrix;
        let d = m.nrows();
        if m.ncols() != d {
            return Err(Error::DimensionMismatch("projection matrix is not square".into()));
        }
        if self.rank_budget == 0 || self.rank_budget > d {
            return Err(Error::InvalidRank {
                k: self.rank_budget,
                d,
            });
        }
        let asym = crate::linalg::max_asymmetry(m);
        if asym > tol {
            return Err(Error::NotSymmetric(asym));
        }
        let tr = m.trace();
        if (tr - self.rank_budget as f64).abs() > tol * d as f64 {
            return Err(Error::invalid(format!(
                "trace {tr} differs from rank budget {}",
                self.rank_budget
            )));
        }
        let eig = crate::linalg::sym_eigen(m)?;
        let lo = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo < -tol || hi > 1.0 + tol {
            return Err(Error::invalid(format!(
                "eigenvalues [{lo}, {hi}] leave [0, 1]"
            )));
        }
        if self.kind == BudgetKind::Projection {
            let sq = m * m;
            let err = (&sq - m).abs().max();
            if err > tol.sqrt() {
                return Err(Error::invalid(format!("not idempotent (error {err:.3e})")));
            }
        }
        Ok(())
    }
}

/// Empirical first and second moments of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    /// Covariance normalised by n.
    pub covariance: DMatrix<f64>,
    /// Second moment about a supplied centre, normalised by n.
    pub centered_second_moment: DMatrix<f64>,
    pub n: usize,
}

/// Tunable constants that the theory leaves as "sufficiently large/small".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgoConstants {
    /// Upper limit on the contamination level accepted by the algorithms.
    pub c_small: f64,
    /// Multiplier on delta_tilde^2 / eps in the filter stopping rule.
    pub c_stop: f64,
    /// Inflation applied to the stability parameter in the estimators.
    pub c_stab: f64,
    /// Multiplier on gamma_tilde in the robust PCA stopping rule.
    pub c_pca: f64,
    /// Relative tolerance for eigenvalue ties.
    pub tol_eig: f64,
    /// Tolerance for symmetry and PSD checks.
    pub tol_psd: f64,
}

impl Default for AlgoConstants {
    fn default() -> Self {
        AlgoConstants {
            c_small: 0.2,
            c_stop: 4.0,
            c_stab: 4.0,
            c_pca: 4.0,
            tol_eig: 1e-9,
            tol_psd: 1e-8,
        }
    }
}

impl AlgoConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c_small,
            self.c_stop,
            self.c_stab,
            self.c_pca,
            self.tol_eig,
            self.tol_psd,
        ];
        if all.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::invalid("algorithm constants must be finite and positive"));
        }
        if self.c_small >= 0.5 {
            return Err(Error::invalid("c_small must be below 1/2"));
        }
        Ok(())
    }
}
