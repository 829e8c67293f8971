use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Numerics(#[from] srflow_numerics::NumericsError),
    #[error(transparent)]
    Conditioning(#[from] srflow_conditioning::ConditioningError),
    #[error(transparent)]
    Dsp(#[from] srflow_dsp::DspError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("non-finite loss {loss} at step {step} (seed {seed}, items {items:?})")]
    NonFiniteLoss {
        loss: f64,
        step: u64,
        seed: u64,
        items: Vec<String>,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, FlowError>;
