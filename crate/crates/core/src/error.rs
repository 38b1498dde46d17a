use thiserror::Error;

/// Errors raised by the library. Every variant carries enough context to be
/// reported to a user without further lookup.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("invalid rank budget k={k} for dimension d={d}")]
    InvalidRank { k: usize, d: usize },
    #[error("eigendecomposition did not converge")]
    EigenFailure,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty point set")]
    Empty,
    #[error("malformed input at line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("budget check failed: certified lower bound {lower:.6e} exceeds rho {rho:.6e}")]
    BudgetExceeded { lower: f64, rho: f64 },
    #[error("work limit exceeded: {0}")]
    WorkLimit(String),
    #[error("degenerate run: {reason}")]
    Degenerate {
        reason: String,
        trace: Option<Box<crate::filter::FilterTrace>>,
    },
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn degenerate(reason: impl Into<String>) -> Self {
        Error::Degenerate {
            reason: reason.into(),
            trace: None,
        }
    }
}
