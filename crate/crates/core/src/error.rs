use crate::descriptor::Segment;
use crate::entropy::LatentStage;

/// Errors produced anywhere in the descriptor pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("segment `{}` has length {actual}, expected {expected}", segment.name())]
    SegmentLength {
        segment: Segment,
        expected: usize,
        actual: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    Version(u8),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("incompatible artifacts: {0}")]
    Incompatible(String),

    #[error("exp-Golomb code truncated at bit position {position}")]
    ExpGolombTruncated { position: usize },

    #[error("latent value {value} exceeds the magnitude cap {cap}")]
    LatentRange { value: i64, cap: i64 },

    #[error("latent is in stage {found:?}, expected {expected:?}")]
    Stage {
        expected: LatentStage,
        found: LatentStage,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("training failed at epoch {epoch}, batch {batch}: {reason}")]
    Training {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
