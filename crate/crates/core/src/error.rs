use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions or parameters that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("sequencing error: expected t={expected}, got t={got}")]
    Sequencing { expected: u64, got: u64 },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("lag window not warm: {have} of {need} frames")]
    NotWarm { have: usize, need: usize },

    /// The design has fewer independent columns than its width.
    #[error("rank-deficient design: {deficient} of {width} columns are linearly dependent")]
    RankDeficient { deficient: usize, width: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
