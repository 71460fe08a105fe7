//! Command-line error taxonomy and exit codes.

use std::fmt;

/// Errors grouped by exit code: configuration and flag problems exit 2,
/// problems with the data files exit 3, and numerical failures (including
/// non-convergence without the override flag) exit 4.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<stlmm::Error> for CliError {
    fn from(e: stlmm::Error) -> Self {
        match &e {
            stlmm::Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            stlmm::Error::EmptyData(_) | stlmm::Error::DimensionMismatch(_) => {
                CliError::Data(e.to_string())
            }
            stlmm::Error::NotPositiveDefinite { .. }
            | stlmm::Error::IndefiniteCovariance(_)
            | stlmm::Error::NotEstimable { .. }
            | stlmm::Error::TooManyFailures { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
