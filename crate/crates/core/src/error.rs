//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A scalar argument violated its domain (negative distance, range <= 0, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix that must be symmetric positive definite failed to factor.
    /// `what` names the offending matrix, `pivot` the first failing pivot
    /// (0-based) when known.
    #[error("{what} is not positive definite{}", pivot.map(|p| format!(" (pivot {p})")).unwrap_or_default())]
    NotPositiveDefinite { what: String, pivot: Option<usize> },

    /// A composed covariance came out non-positive where positivity is required.
    #[error("covariance is not positive definite: {0}")]
    IndefiniteCovariance(String),

    /// The fixed-effects cross-product is rank deficient, so GLS/OLS
    /// coefficients are not estimable.
    #[error("design matrix is rank deficient: null space has dimension {null_dim} (p = {p})")]
    NotEstimable { null_dim: usize, p: usize },

    /// An operation received no usable data (no observations, no residual
    /// pairs, all semivariogram classes empty, ...).
    #[error("no usable data: {0}")]
    EmptyData(String),

    /// Shapes disagree (rhs rows vs. operator dimension, X rows vs. y, ...).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A simulation study lost more than the tolerated share of replicates.
    #[error("too many failed replicates: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn empty(msg: impl Into<String>) -> Self {
        Error::EmptyData(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
