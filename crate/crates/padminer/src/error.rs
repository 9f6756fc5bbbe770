//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window spec: {0}")]
    InvalidWindowSpec(String),

    #[error("series `{id}` too short: {len} samples, window needs {window}")]
    SeriesTooShort { id: String, len: usize, window: usize },

    #[error("series `{0}` has no usable values")]
    EmptySeries(String),

    #[error("series `{id}` is constant (range is zero)")]
    ConstantSeries { id: String },

    #[error("series `{id}` has too many missing values ({missing} of {total})")]
    TooManyMissing { id: String, missing: usize, total: usize },

    #[error("invalid sax config: {0}")]
    InvalidSaxConfig(String),

    #[error("invalid mining config: {0}")]
    InvalidMiningConfig(String),

    #[error("pattern has empty cover")]
    EmptyCover,

    #[error("embedding geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("empty pattern set: fpof is undefined without patterns")]
    EmptyPatternSet,

    #[error("feature arity mismatch: model expects {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("fingerprint interval {interval}s is finer than the sample interval {sample}s")]
    IntervalTooFine { interval: i64, sample: i64 },

    #[error("fingerprint/histogram shape mismatch")]
    ShapeMismatch,

    #[error("entity `{0}` not found")]
    EntityNotFound(String),

    #[error("no patterns mined for any sensor; try coarser discretization (fewer bins or larger paa_win)")]
    NoPatterns,

    #[error("no labels provided for evaluation")]
    NoLabels,

    #[error("empty parameter grid")]
    EmptyGrid,

    #[error("malformed input at {path}:{line}: {msg}")]
    Malformed { path: String, line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
