use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: expected {expected}, got {actual}")]
    LayerShape {
        layer: usize,
        expected: String,
        actual: String,
    },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error("temperature must be positive, got {0}")]
    Temperature(f32),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("action {action} not applicable in the given state")]
    Inapplicable { action: u32 },

    #[error("init and goal must be set before emitting a problem")]
    MissingInitGoal,

    #[error("action label {0} is unused by the trained model")]
    UnusedLabel(usize),

    #[error("PU calibration constant is zero: classifier rejects all held-out positives")]
    CalibrationZero,

    #[error("missing checkpoint for stage `{stage}`: {path}")]
    MissingCheckpoint { stage: String, path: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
