use thiserror::Error;

#[derive(Debug, Error)]
pub enum CfError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimensionality error: {0}")]
    Dimensionality(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("rank {rank} out of range: must satisfy 0 < rank < {taps} (kernel size product)")]
    RankOutOfRange { rank: usize, taps: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("explicit Hankel would hold {entries} entries, above the cap of {cap}")]
    ExplicitCapExceeded { entries: usize, cap: usize },

    #[error("degenerate sampling mask: {0}")]
    DegenerateMask(String),

    #[error("ACS region: {0}")]
    Acs(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("tensor file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CfError>;
