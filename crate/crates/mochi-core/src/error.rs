//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error enum. Variants map one-to-one onto the failure modes of
/// the public operations; see each operation's doc for which variants it can
/// return.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is at or below the zero guard {eps:e}")]
    ZeroVector { norm: f64, eps: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("embedding dimension must be at least 2, got {0}")]
    BadDimension(usize),

    #[error("input sequence is empty")]
    EmptyInput,

    #[error("non-finite value encountered: {0}")]
    NonFinite(f64),

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("batch of {batch} exceeds queue capacity {capacity}")]
    BatchTooLarge { batch: usize, capacity: usize },

    #[error("labels length {labels} does not match features length {features}")]
    LabelLengthMismatch { labels: usize, features: usize },

    #[error("missing label: {0}")]
    MissingLabels(String),

    #[error("negative set is empty")]
    EmptyNegatives,

    #[error("every record needs at least {needed} negatives, record {record} has {got}")]
    TooFewNegatives {
        record: usize,
        needed: usize,
        got: usize,
    },

    #[error("pair mixing needs a truncation of at least 2, got {0}")]
    TruncationTooSmall(usize),

    #[error("need {needed} negatives for synthesis, only {got} available")]
    NotEnoughNegatives { needed: usize, got: usize },

    #[error("no eligible negatives remain after label filtering")]
    NoEligibleNegatives,

    #[error("provenance references entry {index} but only {len} entries exist")]
    BadProvenance { index: usize, len: usize },

    #[error("bad layer shape: {0}")]
    BadShape(String),

    #[error("parameter shapes disagree between encoders at layer {0}")]
    ShapeMismatch(usize),

    #[error("test labels {{{0}}} do not appear in the training label universe")]
    LabelUniverseMismatch(String),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("row at line {line} has {got} columns, expected {expected}")]
    InconsistentWidth {
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("class {label} has only {count} samples, need at least 2")]
    ClassTooSmall { label: i64, count: usize },

    #[error("center rejection budget of {budget} attempts exhausted; separation infeasible")]
    RejectionBudgetExceeded { budget: usize },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
