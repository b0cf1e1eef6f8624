use diffcore::DiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate 6D rotation: {0}")]
    SingularRotation(String),

    #[error("non-finite pose parameters")]
    NonFinitePose,

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("point behind camera (depth {0})")]
    BehindCamera(f64),

    #[error("flow produced non-finite values in block {block}")]
    FlowNumeric { block: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Data(String),

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error(transparent)]
    Diff(#[from] DiffError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
