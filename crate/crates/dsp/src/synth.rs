//! Speech-like synthetic utterances with labelled high-band content tokens.
//!
//! A harmonic source at `f0_hz` (with vibrato) is shaped by a sum of Gaussian
//! formant bumps over a glottal tilt. The duration is split into equal slots,
//! one per content token, and each token adds a band-noise burst in the centre
//! of its slot whose energy is spread over the 4 to 8 kHz range according to a
//! token-specific pattern.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DspError, Result};
use crate::spectrum::shape_spectrum;
use crate::waveform::{mean_power, Waveform};

pub const MIN_F0_HZ: f64 = 70.0;
pub const MAX_F0_HZ: f64 = 400.0;
pub const MIN_DURATION_S: f64 = 0.5;
pub const MAX_DURATION_S: f64 = 4.0;

/// Lower edge of the band that carries content tokens.
pub const HIGH_BAND_HZ: f64 = 4000.0;
pub const TOKEN_BAND_COUNT: usize = 8;
pub const TOKEN_BAND_WIDTH_HZ: f64 = 500.0;
/// Fraction of each slot covered by its burst, centred in the slot.
pub const BURST_FRACTION: f64 = 0.6;
/// Burst RMS relative to the voiced source RMS.
pub const BURST_LEVEL: f64 = 0.35;
/// Band gain for sub-bands outside a token's pattern.
const PATTERN_FLOOR: f64 = 0.05;
/// Output RMS after normalization.
pub const TARGET_RMS: f64 = 0.1;
const PEAK_LIMIT: f64 = 0.9;
const FADE_S: f64 = 0.01;
const FORMANT_FLOOR: f64 = 0.02;

/// Single-band tokens plus every unordered pair of bands.
pub const MAX_VOCAB: usize = TOKEN_BAND_COUNT + TOKEN_BAND_COUNT * (TOKEN_BAND_COUNT - 1) / 2;

pub fn token_name(index: usize) -> String {
    format!("S{index}")
}

pub fn parse_token(name: &str) -> Option<usize> {
    let idx: usize = name.strip_prefix('S')?.parse().ok()?;
    (idx < MAX_VOCAB).then_some(idx)
}

/// Linear amplitude gain per 500 Hz sub-band above [`HIGH_BAND_HZ`].
pub fn token_pattern(index: usize) -> [f64; TOKEN_BAND_COUNT] {
    let mut g = [PATTERN_FLOOR; TOKEN_BAND_COUNT];
    if index < TOKEN_BAND_COUNT {
        g[index] = 1.0;
    } else {
        let mut k = index - TOKEN_BAND_COUNT;
        'outer: for a in 0..TOKEN_BAND_COUNT {
            for b in a + 1..TOKEN_BAND_COUNT {
                if k == 0 {
                    g[a] = 1.0;
                    g[b] = 1.0;
                    break 'outer;
                }
                k -= 1;
            }
        }
    }
    g
}

/// Index of the token sub-band containing `hz`, if it lies in the high band.
pub fn token_band(hz: f64) -> Option<usize> {
    if hz < HIGH_BAND_HZ {
        return None;
    }
    Some((((hz - HIGH_BAND_HZ) / TOKEN_BAND_WIDTH_HZ) as usize).min(TOKEN_BAND_COUNT - 1))
}

/// Unit-power band noise carrying the spectral pattern of `token`.
pub fn token_burst<R: Rng + ?Sized>(token: usize, len: usize, sample_rate: u32, rng: &mut R) -> Vec<f64> {
    let pattern = token_pattern(token);
    let white: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut x = shape_spectrum(&white, sample_rate, |hz| token_band(hz).map_or(0.0, |b| pattern[b]));
    let p = mean_power(&x);
    if p > 0.0 {
        let g = 1.0 / p.sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormantBand {
    pub center_hz: f64,
    pub width_hz: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUtteranceSpec {
    pub f0_hz: f64,
    /// Peak relative F0 deviation of the vibrato, e.g. 0.02 for 2%.
    pub vibrato_depth: f64,
    pub vibrato_rate_hz: f64,
    pub formants: Vec<FormantBand>,
    pub content_tokens: Vec<String>,
    pub duration_s: f64,
    pub rng_seed: u64,
}

impl SyntheticUtteranceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DspError::InvalidSpec(m));
        if !(MIN_F0_HZ..=MAX_F0_HZ).contains(&self.f0_hz) {
            return bad(format!("f0_hz {} outside [{MIN_F0_HZ}, {MAX_F0_HZ}]", self.f0_hz));
        }
        if !(MIN_DURATION_S..=MAX_DURATION_S).contains(&self.duration_s) {
            return bad(format!(
                "duration_s {} outside [{MIN_DURATION_S}, {MAX_DURATION_S}]",
                self.duration_s
            ));
        }
        if self.content_tokens.is_empty() {
            return bad("content_tokens is empty".into());
        }
        if let Some(t) = self.content_tokens.iter().find(|t| parse_token(t).is_none()) {
            return bad(format!("unknown content token {t:?}"));
        }
        if !(0.0..0.5).contains(&self.vibrato_depth) || !(self.vibrato_rate_hz >= 0.0 && self.vibrato_rate_hz.is_finite()) {
            return bad("vibrato depth must be in [0, 0.5) and rate non-negative".into());
        }
        if self.formants.is_empty() {
            return bad("at least one formant band is required".into());
        }
        for f in &self.formants {
            if !(f.center_hz > 0.0 && f.width_hz > 0.0 && f.gain >= 0.0 && f.gain.is_finite()) {
                return bad(format!("invalid formant band {f:?}"));
            }
        }
        Ok(())
    }

    /// Formant envelope amplitude at `hz`, before the glottal tilt.
    pub fn envelope(&self, hz: f64) -> f64 {
        FORMANT_FLOOR
            + self
                .formants
                .iter()
                .map(|b| b.gain * (-0.5 * ((hz - b.center_hz) / b.width_hz).powi(2)).exp())
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceLabels {
    pub tokens: Vec<String>,
    pub f0_hz: f64,
    /// `n + 1` slot edges in seconds for `n` tokens.
    pub slot_boundaries_s: Vec<f64>,
}

impl UtteranceLabels {
    /// Start and end (seconds) of the burst inside slot `i`.
    pub fn burst_region_s(&self, i: usize) -> (f64, f64) {
        let (a, b) = (self.slot_boundaries_s[i], self.slot_boundaries_s[i + 1]);
        let margin = 0.5 * (1.0 - BURST_FRACTION) * (b - a);
        (a + margin, b - margin)
    }
}

pub fn synth_utterance(spec: &SyntheticUtteranceSpec, sample_rate: u32) -> Result<(Waveform, UtteranceLabels)> {
    spec.validate()?;
    let fs = sample_rate as f64;
    let len = (spec.duration_s * fs).round() as usize;
    let n = spec.content_tokens.len();
    let slot_boundaries_s: Vec<f64> = (0..=n).map(|i| spec.duration_s * i as f64 / n as f64).collect();
    let labels = UtteranceLabels {
        tokens: spec.content_tokens.clone(),
        f0_hz: spec.f0_hz,
        slot_boundaries_s,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let nyquist = fs / 2.0;
    let top = spec.f0_hz * (1.0 + spec.vibrato_depth);
    let harmonics = ((nyquist - 100.0) / top).floor().max(1.0) as usize;
    let amps: Vec<f64> = (1..=harmonics)
        .map(|k| spec.envelope(k as f64 * spec.f0_hz) / k as f64)
        .collect();
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let vib_phase = rng.random_range(0.0..2.0 * PI);

    let mut voice = vec![0.0; len];
    let mut phase = 0.0;
    for (i, v) in voice.iter_mut().enumerate() {
        let t = i as f64 / fs;
        let f = spec.f0_hz * (1.0 + spec.vibrato_depth * (2.0 * PI * spec.vibrato_rate_hz * t + vib_phase).sin());
        *v = amps
            .iter()
            .zip(&phases)
            .enumerate()
            .map(|(k, (a, p))| a * ((k + 1) as f64 * phase + p).sin())
            .sum();
        phase = (phase + 2.0 * PI * f / fs) % (2.0 * PI);
    }

    // Syllable-like amplitude contour per slot.
    for (i, v) in voice.iter_mut().enumerate() {
        let t = i as f64 / fs;
        let slot = ((t / spec.duration_s * n as f64) as usize).min(n - 1);
        let (a, b) = (labels.slot_boundaries_s[slot], labels.slot_boundaries_s[slot + 1]);
        *v *= 0.7 + 0.3 * (PI * (t - a) / (b - a)).sin();
    }
    let voice_rms = mean_power(&voice).sqrt();

    let mut out = voice;
    for (i, tok) in spec.content_tokens.iter().enumerate() {
        let token = parse_token(tok).expect("validated");
        let (s, e) = labels.burst_region_s(i);
        let (s, e) = ((s * fs).round() as usize, ((e * fs).round() as usize).min(len));
        if e <= s + 1 {
            continue;
        }
        let burst = token_burst(token, e - s, sample_rate, &mut rng);
        let m = (e - s) as f64;
        for (j, b) in burst.iter().enumerate() {
            let win = 0.5 - 0.5 * (2.0 * PI * (j as f64 + 0.5) / m).cos();
            out[s + j] += BURST_LEVEL * voice_rms * win * b;
        }
    }

    let fade = ((FADE_S * fs) as usize).min(len / 2);
    for j in 0..fade {
        let g = j as f64 / fade as f64;
        out[j] *= g;
        out[len - 1 - j] *= g;
    }

    let rms = mean_power(&out).sqrt();
    if !(rms > 0.0) {
        return Err(DspError::SilentSignal);
    }
    let mut gain = TARGET_RMS / rms;
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())) * gain;
    if peak > PEAK_LIMIT {
        gain *= PEAK_LIMIT / peak;
    }
    out.iter_mut().for_each(|v| *v *= gain);
    Ok((Waveform::new(out, sample_rate), labels))
}

/// Reference vowel-like formant layout for a 120 Hz voice.
pub const BASE_FORMANTS: [FormantBand; 4] = [
    FormantBand { center_hz: 600.0, width_hz: 120.0, gain: 1.0 },
    FormantBand { center_hz: 1300.0, width_hz: 160.0, gain: 0.6 },
    FormantBand { center_hz: 2500.0, width_hz: 220.0, gain: 0.35 },
    FormantBand { center_hz: 3400.0, width_hz: 280.0, gain: 0.2 },
];

/// A synthetic "speaker": base F0 plus a formant envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub f0_hz: f64,
    pub formants: Vec<FormantBand>,
}

impl SpeakerProfile {
    /// Formant centres scale gently with F0 (shorter tracts for higher
    /// voices) and get a small per-speaker jitter, so speakers with different
    /// F0 also differ in envelope.
    pub fn random<R: Rng + ?Sized>(f0_hz: f64, rng: &mut R) -> Self {
        let scale = (f0_hz / 120.0).powf(0.3);
        let formants = BASE_FORMANTS
            .iter()
            .map(|b| FormantBand {
                center_hz: b.center_hz * scale * rng.random_range(0.93..1.07),
                width_hz: b.width_hz * scale,
                gain: b.gain * rng.random_range(0.8..1.2),
            })
            .collect();
        Self { f0_hz, formants }
    }
}
