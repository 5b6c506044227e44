use std::path::PathBuf;

use crate::qp::SolveStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad input data or parameters.
    #[error("validation error: {0}")]
    Validation(String),

    /// Malformed profile files.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("solver returned {status:?} at step {step} (iterations {iterations}, primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e})")]
    Solver {
        step: usize,
        status: SolveStatus,
        iterations: u32,
        primal_residual: f64,
        dual_residual: f64,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Shorthand for returning a validation error.
macro_rules! invalid {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::Validation(format!($($arg)*)))
    };
}
pub(crate) use invalid;
