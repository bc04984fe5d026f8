use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("resolution exhausted: cube at level {level} has no children on a depth-{depth} grid")]
    ResolutionExhausted { level: u32, depth: u32 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid weight at cell {cell}: {reason}")]
    InvalidWeight { cell: usize, reason: String },

    #[error("zero body: domination holds trivially with constant 0")]
    ZeroBody,

    #[error("unknown kind `{0}`")]
    UnknownKind(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
