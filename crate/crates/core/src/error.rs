use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("invalid motion: {0}")]
    InvalidMotion(String),

    #[error("motion has {frames} frames, at least {required} required")]
    TooFewFrames { frames: usize, required: usize },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    #[error("infeasible dataset parameters: {0}")]
    Infeasible(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("capability not available: {0}")]
    Capability(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("motion of class {label} is already classified as {predicted}")]
    Misclassified { label: usize, predicted: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
