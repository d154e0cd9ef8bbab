use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("horizon mismatch: expected {expected} states, got {actual}")]
    HorizonMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("schema error at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("nominal trajectory is infeasible: {0}")]
    InfeasibleNominal(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("attack produced an infeasible iterate: {0}")]
    FeasibilityBroken(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidTrajectory(_) => "invalid_trajectory",
            Error::HorizonMismatch { .. } => "horizon_mismatch",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptyDataset => "empty_dataset",
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::InfeasibleNominal(_) => "infeasible_nominal",
            Error::NonFinite(_) => "non_finite",
            Error::FeasibilityBroken(_) => "feasibility_broken",
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "missing_file",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
