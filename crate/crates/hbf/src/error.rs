//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by solvers, numerics and the experiment harness.
#[derive(Debug, Error)]
pub enum HbfError {
    #[error("dimension mismatch in {context}: {details}")]
    DimensionMismatch {
        context: &'static str,
        details: String,
    },

    #[error("linear system is numerically singular (rcond {rcond:.3e})")]
    SingularSystem { rcond: f64 },

    #[error("matrix is not positive definite in {0}")]
    NotPositiveDefinite(&'static str),

    #[error("precoder has zero transmit power; scaling factor undefined")]
    ZeroPrecoder,

    #[error("analog beamforming matrix is rank deficient")]
    RankDeficient,

    #[error("combiner Gram matrix W^H W is singular")]
    CombinerRankDeficient,

    #[error("dictionary has {available} columns but {required} are required")]
    DictionaryTooSmall { available: usize, required: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config: {0}")]
    Config(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl HbfError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HbfError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HbfError>;
