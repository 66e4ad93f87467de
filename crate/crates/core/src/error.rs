use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or configuration supplied by the caller.
    Usage,
    /// Unreadable, malformed or inconsistent input data.
    Data,
    /// Factorization, convergence or training failures.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: required column `{column}` not found")]
    MissingColumn { column: String },

    #[error("parse error at row {row}, column `{column}`: cannot read {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid record at row {row}: {reason}")]
    InvalidRecord { row: usize, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("degenerate column `{column}`: zero variance on the fitting set")]
    DegenerateColumn { column: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error(
        "solver did not converge within {iterations} iterations (worst KKT residual {worst_kkt:e})"
    )]
    Convergence { iterations: usize, worst_kkt: f64 },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("R² is undefined: targets have zero total variance")]
    UndefinedR2,

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) => ErrorClass::Usage,
            Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::MissingColumn { .. }
            | Error::Parse { .. }
            | Error::InvalidRecord { .. }
            | Error::EmptyDataset
            | Error::DegenerateColumn { .. }
            | Error::UndefinedR2
            | Error::FormatVersion { .. } => ErrorClass::Data,
            Error::NotPositiveDefinite { .. }
            | Error::Convergence { .. }
            | Error::TrainingDiverged { .. } => ErrorClass::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
