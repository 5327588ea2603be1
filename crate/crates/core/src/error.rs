//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("provider timeout: {0}")]
    ProviderTimeout(String),

    #[error("http status {status}: {body}")]
    HttpStatus { status: u16, body: String },

    #[error("extraction path {path:?} missed; body excerpt: {excerpt}")]
    Extraction { path: String, excerpt: String },

    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetryExhausted { attempts: u32, last: String },

    #[error("parse failure on rater output: {0:?}")]
    RaterParse(String),

    #[error("index format error: {0}")]
    IndexFormat(String),

    #[error("incomparable runs: {0}")]
    Incomparable(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;
