//! Robust statistics under combined global and local contamination.
//!
//! An adversary may replace an eps-fraction of the sample outright (global
//! contamination) and, in addition, move every point by a displacement whose
//! average k-sliced size is at most rho (local contamination). The crate
//! provides the contamination models, exact and heuristic stability checks,
//! the filtering estimators for the mean and for the distribution under
//! sliced Wasserstein distance, robust PCA, and an experiment harness.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adversaries;
pub mod certificates;
pub mod error;
pub mod filter;
pub mod harness;
pub mod io;
pub mod linalg;
pub(crate) mod matrix_serde;
pub mod pca;
pub mod rng;
pub mod stability;
pub mod types;
pub mod wasserstein;

pub use error::{Error, Result};
pub use types::{AlgoConstants, BudgetKind, Label, MomentSummary, PointSet, ProjectionBudget};
