use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty record text")]
    Empty,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<&'static str>),
    #[error("key [{0}] appears more than once")]
    DuplicateKey(String),
    #[error("invalid value {value:?} for [{field}] at byte {offset}")]
    InvalidValue {
        field: &'static str,
        offset: usize,
        value: String,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("field {field} value {value:?}: {reason}")]
pub struct RecordError {
    pub field: String,
    pub value: String,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum ConditioningError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("cutoff {cutoff_hz} Hz outside (0, {nyquist_hz}]")]
    CutoffOutOfRange { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("width mismatch for {what}: expected {expected}, got {got}")]
    Width {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty utterance id")]
    EmptyId,
    #[error("cache {path}, line {line}: {message}")]
    CacheFormat { path: PathBuf, line: usize, message: String },
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Numerics(#[from] srflow_numerics::NumericsError),
}

pub type Result<T> = std::result::Result<T, ConditioningError>;
