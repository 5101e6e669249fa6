use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("dimension mismatch: expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("positive log-probability {value} at ({row}, {col})")]
    PositiveLogProb { row: usize, col: usize, value: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("importance weight out of range at ({row}, {col}): {value}")]
    WeightOutOfRange { row: usize, col: usize, value: f64 },

    #[error("centroid {cluster} has zero mass at text {col} where the document weight is positive")]
    ZeroCentroidMass { cluster: usize, col: usize },

    #[error("requested {k} clusters but only {n} rows are available")]
    TooManyClusters { k: usize, n: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("resampling weights are degenerate (all zero or non-finite)")]
    DegenerateResampleWeights,

    #[error("q is zero at index {index} where p is positive")]
    AbsoluteContinuity { index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied parameters rather than data.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::InvalidParam(_) | Error::TooManyClusters { .. })
    }
}
