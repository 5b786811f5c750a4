use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("measurement annihilated state: numerical rank {rank} < {modes}")]
    RankDeficient { rank: usize, modes: usize },
    #[error("state corruption: {0}")]
    Corrupted(String),
    #[error("non-finite entries while propagating step {0}")]
    NonFinite(usize),
    #[error("dense product overflow at step {0}; use the QR path")]
    Overflow(usize),
    #[error("gap closing: parity ill-defined")]
    GapClosing,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
