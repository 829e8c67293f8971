//! Signal processing for the synthetic speech pipeline: corpus synthesis,
//! degradation, the MDCT latent codec and the acoustic analyses (spectra,
//! pitch and bandwidth) used as conditioning priors and metrics.

pub mod bandwidth;
pub mod degrade;
pub mod error;
pub mod filter;
pub mod mdct;
pub mod noise;
pub mod pitch;
pub mod spectrum;
pub mod synth;
pub mod wav;
pub mod waveform;

pub use bandwidth::estimate_bandwidth;
pub use degrade::{degrade, DegradationSampler, DegradationSpec, Degraded};
pub use error::{DspError, Result};
pub use filter::{lowpass, lowpass_taps};
pub use mdct::{mdct_decode, mdct_encode, LatentSequence, Mdct, NormStats};
pub use noise::{add_noise_at_snr, generate_noise, NoiseKind};
pub use pitch::{pitch_stats, track_pitch, PitchStats, PitchTrack};
pub use spectrum::{average_power_spectrum, stft_magnitude, Spectrogram, Window};
pub use synth::{synth_utterance, FormantBand, SpeakerProfile, SyntheticUtteranceSpec, UtteranceLabels};
pub use wav::{read_wav, write_wav};
pub use waveform::{Waveform, SAMPLE_RATE};
