use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid extents {0:?}: need at least one mode and every extent >= 1")]
    InvalidDims(Vec<usize>),

    #[error("data length {len} does not match extents {dims:?}")]
    LengthMismatch { dims: Vec<usize>, len: usize },

    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch(Vec<usize>, Vec<usize>),

    #[error("invalid mode subset {modes:?} for a {order}-mode tensor: {reason}")]
    InvalidModes {
        modes: Vec<usize>,
        order: usize,
        reason: &'static str,
    },

    #[error("mask entries must be 0 or 1, found {0}")]
    NonBinaryMask(f64),

    #[error("mask has no observed entries")]
    EmptyMask,

    #[error("matrix is not symmetric (|a_ij - a_ji| = {0:e})")]
    Asymmetric(f64),

    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),

    #[error("sign vector entry {0} is not -1 or +1")]
    NotSign(i64),

    #[error("problem too large for exhaustive search: p = {p} (limit {limit})")]
    TooLarge { p: usize, limit: usize },

    #[error("Gram matrix is singular even with ridge {0:e}")]
    SingularGram(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("partition spec {spec:?}: {reason}")]
    Partition { spec: String, reason: String },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
