use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid utterance spec: {0}")]
    InvalidSpec(String),
    #[error("cutoff {cutoff_hz} Hz outside (0, {nyquist_hz}) Hz")]
    CutoffOutOfRange { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("signal has zero power")]
    SilentSignal,
    #[error("noise has zero power")]
    SilentNoise,
    #[error("frame length {0} must be even and positive")]
    OddFrameLength(usize),
    #[error("fft length {0} must be a power of two")]
    FftLength(usize),
    #[error("hop {hop} must be in 1..={fft_len}")]
    Hop { hop: usize, fft_len: usize },
    #[error("signal of {len} samples is shorter than one frame of {frame}")]
    TooShort { len: usize, frame: usize },
    #[error("latent shape mismatch: {0}")]
    LatentShape(String),
    #[error("wav: {0}")]
    Wav(String),
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DspError>;
