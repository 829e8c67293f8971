//! Log-spectral distance and edit-distance error rate.

use serde::{Deserialize, Serialize};
use srflow_dsp::{stft_magnitude, Spectrogram, Waveform, Window};

use crate::error::{EvalError, Result};

/// Magnitudes are floored here before taking logarithms.
pub const LSD_EPS: f64 = 1e-8;
/// Frame-count differences up to this many frames are truncated away.
pub const MAX_FRAME_SLACK: usize = 2;

/// STFT analysis used for spectral metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralParams {
    pub fft_len: usize,
    pub hop: usize,
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self { fft_len: 512, hop: 128 }
    }
}

impl SpectralParams {
    pub fn spectrogram(&self, w: &Waveform) -> Result<Spectrogram> {
        Ok(stft_magnitude(w, self.fft_len, self.hop, Window::Hann)?)
    }
}

fn aligned(s_ref: &Spectrogram, s_gen: &Spectrogram) -> Result<usize> {
    let gap = s_ref.frames.abs_diff(s_gen.frames);
    if s_ref.bins != s_gen.bins || gap > MAX_FRAME_SLACK || s_ref.frames.min(s_gen.frames) == 0 {
        return Err(EvalError::SpectrogramShape {
            ref_frames: s_ref.frames,
            ref_bins: s_ref.bins,
            gen_frames: s_gen.frames,
            gen_bins: s_gen.bins,
        });
    }
    if gap > 0 {
        log::warn!(
            "truncating spectrograms to {} frames ({} vs {})",
            s_ref.frames.min(s_gen.frames),
            s_ref.frames,
            s_gen.frames
        );
    }
    Ok(s_ref.frames.min(s_gen.frames))
}

/// LSD over the bins in `bins`, averaged over the common frames.
fn lsd_bins(s_ref: &Spectrogram, s_gen: &Spectrogram, bins: std::ops::Range<usize>) -> Result<f64> {
    let frames = aligned(s_ref, s_gen)?;
    if bins.is_empty() {
        return Err(EvalError::Empty("frequency bins"));
    }
    let width = bins.len() as f64;
    let mut total = 0.0;
    for t in 0..frames {
        let (r, g) = (s_ref.frame(t), s_gen.frame(t));
        let mut acc = 0.0;
        for f in bins.clone() {
            let a = r[f].max(LSD_EPS);
            let b = g[f].max(LSD_EPS);
            let d = 2.0 * (a / b).log10();
            acc += d * d;
        }
        total += (acc / width).sqrt();
    }
    Ok(total / frames as f64)
}

/// `(1/T) Σ_t sqrt((1/F) Σ_f log10(S² / Ŝ²)²)`.
pub fn lsd(s_ref: &Spectrogram, s_gen: &Spectrogram) -> Result<f64> {
    lsd_bins(s_ref, s_gen, 0..s_ref.bins)
}

/// LSD restricted to bins strictly above `from_hz`.
pub fn lsd_highband(s_ref: &Spectrogram, s_gen: &Spectrogram, from_hz: f64) -> Result<f64> {
    let first = (0..s_ref.bins).find(|&k| s_ref.bin_hz(k) > from_hz).unwrap_or(s_ref.bins);
    lsd_bins(s_ref, s_gen, first..s_ref.bins)
}

/// Minimum number of unit-cost substitutions, deletions and insertions
/// turning `reference` into `hypothesis`.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Edit distance divided by the reference length.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}
