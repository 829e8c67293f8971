use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dsp(#[from] srflow_dsp::DspError),
    #[error(transparent)]
    Flow(#[from] srflow_flow::FlowError),
    #[error("spectrogram shapes differ beyond tolerance: {ref_frames}x{ref_bins} vs {gen_frames}x{gen_bins}")]
    SpectrogramShape {
        ref_frames: usize,
        ref_bins: usize,
        gen_frames: usize,
        gen_bins: usize,
    },
    #[error("reference word sequence is empty")]
    EmptyReference,
    #[error("input too short: {got_s:.3} s, need at least {need_s} s")]
    TooShort { got_s: f64, need_s: f64 },
    #[error("vector dimensions differ: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("no templates to classify against")]
    EmptyBank,
    #[error("nothing to evaluate: {0}")]
    Empty(&'static str),
    #[error("{failed} of {total} utterances failed (first: {first})")]
    TooManyFailures { failed: usize, total: usize, first: String },
}

pub type Result<T> = std::result::Result<T, EvalError>;
