use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("rejection sampler failed: {accepted} accepted out of {attempts} attempts")]
    SamplerFailure { accepted: u64, attempts: u64 },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("invalid tabulation: {0}")]
    InvalidTabulation(String),

    #[error("non-monotone distribution function near t = {at}")]
    NonMonotone { at: f64 },

    #[error("reference mismatch: {0}")]
    ReferenceMismatch(String),

    #[error("modulus not invertible: {0}")]
    NotInvertible(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("outside the validity domain: lambda = {lambda} > {limit}")]
    OutOfDomain { lambda: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
