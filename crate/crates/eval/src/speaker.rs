//! Hand-crafted speaker embedding and cosine similarity.
//!
//! The raw vector is the pitch triple `(ln median F0, log-F0 std, voiced
//! fraction)` followed by the log mean power of 16 log-spaced bands between
//! 100 Hz and 4 kHz. The bands stop below the region where the synthetic
//! corpus carries its content tokens, so the vector describes the voice and
//! not what was said. Dimensions are z-scored with corpus statistics.

use serde::{Deserialize, Serialize};
use srflow_dsp::{average_power_spectrum, pitch_stats, track_pitch, Waveform};

use crate::error::{EvalError, Result};

pub const MIN_DURATION_S: f64 = 0.5;
pub const ENVELOPE_BANDS: usize = 16;
pub const ENVELOPE_LOW_HZ: f64 = 100.0;
pub const ENVELOPE_HIGH_HZ: f64 = 4000.0;
pub const EMBEDDING_DIM: usize = 3 + ENVELOPE_BANDS;
const ANALYSIS_FFT: usize = 512;
const POWER_FLOOR: f64 = 1e-12;
const STD_FLOOR: f64 = 1e-6;

/// Edges of the envelope bands in Hz.
pub fn band_edges() -> Vec<f64> {
    let ratio = (ENVELOPE_HIGH_HZ / ENVELOPE_LOW_HZ).ln();
    (0..=ENVELOPE_BANDS)
        .map(|i| ENVELOPE_LOW_HZ * (ratio * i as f64 / ENVELOPE_BANDS as f64).exp())
        .collect()
}

/// Unnormalized speaker features.
pub fn raw_speaker_features(w: &Waveform) -> Result<Vec<f64>> {
    let dur = w.duration_s();
    if dur < MIN_DURATION_S {
        return Err(EvalError::TooShort {
            got_s: dur,
            need_s: MIN_DURATION_S,
        });
    }
    let p = pitch_stats(&track_pitch(w));
    let mut out = vec![p.median_f0_hz.max(1.0).ln(), p.log_f0_std, p.voiced_fraction];
    let power = average_power_spectrum(w, ANALYSIS_FFT)?;
    let bin_hz = w.sample_rate as f64 / ANALYSIS_FFT as f64;
    for e in band_edges().windows(2) {
        let bins: Vec<f64> = power
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let hz = *k as f64 * bin_hz;
                hz >= e[0] && hz < e[1]
            })
            .map(|(_, &v)| v)
            .collect();
        // Narrow low bands may fall between bins; use the nearest one.
        let mean = if bins.is_empty() {
            let k = ((0.5 * (e[0] + e[1]) / bin_hz).round() as usize).min(power.len() - 1);
            power[k]
        } else {
            bins.iter().sum::<f64>() / bins.len() as f64
        };
        out.push(mean.max(POWER_FLOOR).log10());
    }
    Ok(out)
}

/// Per-dimension z-score statistics over a reference corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SpeakerNormalizer {
    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; EMBEDDING_DIM],
            std: vec![1.0; EMBEDDING_DIM],
        }
    }

    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        if features.is_empty() {
            return Err(EvalError::Empty("speaker features"));
        }
        let d = features[0].len();
        let n = features.len() as f64;
        let mut mean = vec![0.0; d];
        for f in features {
            if f.len() != d {
                return Err(EvalError::Dimension(d, f.len()));
            }
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for f in features {
            for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = var.iter().map(|v| v.sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.mean.len() {
            return Err(EvalError::Dimension(self.mean.len(), raw.len()));
        }
        Ok(raw
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// Z-scored speaker embedding of a waveform of at least half a second.
pub fn proxy_speaker_embedding(w: &Waveform, norm: &SpeakerNormalizer) -> Result<Vec<f64>> {
    norm.apply(&raw_speaker_features(w)?)
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn speaker_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EvalError::Dimension(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>();
    let nb = b.iter().map(|x| x * x).sum::<f64>();
    if na == 0.0 || nb == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    // One square root of the product keeps `sim(a, a)` at exactly one.
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands_are_log_spaced() {
        let e = band_edges();
        assert_eq!(e.len(), ENVELOPE_BANDS + 1);
        assert!((e[0] - 100.0).abs() < 1e-9 && (e[16] - 4000.0).abs() < 1e-6);
        let r = e[1] / e[0];
        assert!(e.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-9));
    }

    #[test]
    fn similarity_closed_forms() {
        assert_eq!(speaker_sim(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(speaker_sim(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!(speaker_sim(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(speaker_sim(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn short_input_is_rejected() {
        let w = Waveform::zeros(4000, 16_000);
        assert!(matches!(raw_speaker_features(&w), Err(EvalError::TooShort { .. })));
    }

    #[test]
    fn normalizer_centres_the_corpus() {
        let f = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let n = SpeakerNormalizer::fit(&f).unwrap();
        assert_eq!(n.apply(&[1.0, 5.0]).unwrap(), vec![-1.0, 0.0]);
    }
}
