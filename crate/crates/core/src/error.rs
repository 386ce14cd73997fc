use thiserror::Error;

use crate::params::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Validation(ValidationReport),

    #[error("config: {0}")]
    Config(String),

    #[error("{what}: {value:.3e} exceeds tolerance {limit:.1e}")]
    Tolerance {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("orbit search: {0}")]
    Orbit(#[from] crate::classical::OrbitError),

    #[error("no persistent peak: in-band mass {mass:.3e} below threshold {threshold:.3e}")]
    NoPersistentPeak { mass: f64, threshold: f64 },

    #[error("index {index} out of range (0..{len})")]
    OutOfRange { index: usize, len: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 for bad input, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Config(_)
            | Error::OutOfRange { .. }
            | Error::Io(_)
            | Error::Json(_) => 1,
            Error::Tolerance { .. }
            | Error::Eigen(_)
            | Error::Orbit(_)
            | Error::NoPersistentPeak { .. } => 2,
        }
    }
}
