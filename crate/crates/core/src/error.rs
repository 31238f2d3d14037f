use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("enumeration needs {needed} coordinates but the cap is {cap}")]
    TooLarge { needed: usize, cap: usize },
    #[error("shape mismatch: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("parameter outside domain: {0}")]
    Domain(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("coupling from the past did not coalesce within {max_updates} updates")]
    Budget { max_updates: u64 },
    #[error("not applicable: {0}")]
    Inapplicable(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
