//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by monitoring, calibration, and data handling.
#[derive(Debug, Error)]
pub enum Error {
    /// A tuning parameter is outside its admissible range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A window length or index violates the admissible scan set.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A scale mode divides by an estimated standard deviation of zero.
    #[error("zero variance: {0}")]
    ZeroVariance(String),

    /// The self-normalizer is zero (constant training data); monitoring
    /// cannot start.
    #[error("degenerate self-normalizer: training sample is constant")]
    DegenerateNormalizer,

    /// An observation was NaN or infinite.
    #[error("non-finite observation at position {position}")]
    NonFiniteObservation { position: usize },

    /// The input stream ended before the training sample was complete.
    #[error("stream exhausted: needed {needed} observations, got {got}")]
    StreamExhausted { needed: usize, got: usize },

    /// A quantile table does not match the requesting configuration.
    #[error("table/config mismatch: {0}")]
    TableMismatch(String),

    /// A quantile table file could not be parsed or fails its own
    /// integrity fingerprint.
    #[error("malformed quantile table: {0}")]
    MalformedTable(String),

    /// Input data is unusable (empty file, no valid rows, bad schema).
    #[error("data error: {0}")]
    DataError(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
