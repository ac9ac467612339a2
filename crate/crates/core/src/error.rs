use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt or undecodable data: {0}")]
    Corrupt(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown region id `{0}`")]
    UnknownRegion(String),

    #[error("region touches the image border")]
    RegionTouchesBorder,

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("landmark schema mismatch: `{0}` vs `{1}`")]
    SchemaMismatch(String, String),

    #[error("landmark schema `{schema}` does not define {what}")]
    SchemaMissing { schema: String, what: String },

    #[error("degenerate triangle in warp ({0:?})")]
    DegenerateTriangle([usize; 3]),

    #[error("no face found")]
    NoFace,

    #[error("landmark backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid manifest at line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimensionMismatch { expected, actual }
    }
}

pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Error {
    Error::dims(expected, actual)
}
