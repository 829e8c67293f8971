//! Procedural noise textures and SNR-controlled mixing.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DspError, Result};
use crate::spectrum::shape_spectrum;
use crate::waveform::{mean_power, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// 1/f spectrum.
    Pink,
    /// White noise gated by slowly varying random bursts.
    AmBursts,
    /// Mains hum (50 Hz and harmonics) over a white floor.
    Hum,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Pink, NoiseKind::AmBursts, NoiseKind::Hum];

    /// Word used for this texture in semantic records.
    pub fn describe(self) -> &'static str {
        match self {
            NoiseKind::Pink => "pink",
            NoiseKind::AmBursts => "bursts",
            NoiseKind::Hum => "hum",
        }
    }
}

fn white(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Unit-power noise of the given texture; bitwise determined by `seed`.
pub fn generate_noise(kind: NoiseKind, len: usize, sample_rate: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = sample_rate as f64;
    let mut x = match kind {
        NoiseKind::Pink => {
            let w = white(len, &mut rng);
            shape_spectrum(&w, sample_rate, |hz| 1.0 / hz.max(20.0).sqrt())
        }
        NoiseKind::AmBursts => {
            let w = white(len, &mut rng);
            let rate = rng.random_range(2.0..6.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            w.iter()
                .enumerate()
                .map(|(i, v)| {
                    let env = 0.5 + 0.5 * (2.0 * PI * rate * i as f64 / fs + phase).sin();
                    v * env * env
                })
                .collect()
        }
        NoiseKind::Hum => {
            let w = white(len, &mut rng);
            let phases: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            (0..len)
                .map(|i| {
                    let t = i as f64 / fs;
                    let hum: f64 = [50.0, 100.0, 150.0]
                        .iter()
                        .zip([1.0, 0.5, 0.25])
                        .zip(phases)
                        .map(|((f, a), p)| a * (2.0 * PI * (f * t + p)).sin())
                        .sum();
                    hum + 0.2 * w[i]
                })
                .collect()
        }
    };
    let p = mean_power(&x);
    if p > 0.0 {
        let g = 1.0 / p.sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
    Waveform::new(x, sample_rate)
}

/// Scale factor that places `noise` at `snr_db` relative to `signal` (both mean-square powers).
pub fn snr_scale(signal_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    (signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Mixes `noise` into `w` at `snr_db`; `None` bypasses mixing entirely.
///
/// Noise shorter than the signal is looped; longer noise is cropped. SNR is
/// measured over the full utterance. The result is not clipped.
pub fn add_noise_at_snr(w: &Waveform, noise: &Waveform, snr_db: Option<f64>) -> Result<Waveform> {
    let Some(snr_db) = snr_db else {
        return Ok(w.clone());
    };
    if w.sample_rate != noise.sample_rate {
        return Err(DspError::SampleRateMismatch(w.sample_rate, noise.sample_rate));
    }
    let ps = w.power();
    if !(ps > 0.0) {
        return Err(DspError::SilentSignal);
    }
    if noise.is_empty() {
        return Err(DspError::SilentNoise);
    }
    let fitted: Vec<f64> = noise.samples.iter().cycle().take(w.len()).copied().collect();
    let pn = mean_power(&fitted);
    if !(pn > 0.0) {
        return Err(DspError::SilentNoise);
    }
    let k = snr_scale(ps, pn, snr_db);
    let samples = w.samples.iter().zip(&fitted).map(|(s, n)| s + k * n).collect();
    Ok(Waveform::new(samples, w.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_power_at_zero_db_has_unit_scale() {
        assert!((snr_scale(1.0, 1.0, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bypass_is_exact() {
        let w = Waveform::new(vec![0.1, -0.2, 0.3], 16_000);
        let n = Waveform::new(vec![1.0, 1.0, 1.0], 16_000);
        assert_eq!(add_noise_at_snr(&w, &n, None).unwrap(), w);
    }

    #[test]
    fn silent_signal_errors() {
        let w = Waveform::zeros(10, 16_000);
        let n = Waveform::new(vec![1.0; 10], 16_000);
        assert!(matches!(add_noise_at_snr(&w, &n, Some(5.0)), Err(DspError::SilentSignal)));
        let w = Waveform::new(vec![1.0; 10], 16_000);
        assert!(matches!(
            add_noise_at_snr(&w, &Waveform::zeros(10, 16_000), Some(5.0)),
            Err(DspError::SilentNoise)
        ));
        assert!(add_noise_at_snr(&w, &Waveform::new(vec![1.0; 10], 8000), Some(5.0)).is_err());
    }

    #[test]
    fn short_noise_is_looped() {
        let w = Waveform::new(vec![1.0; 7], 16_000);
        let n = Waveform::new(vec![1.0, -1.0], 16_000);
        let y = add_noise_at_snr(&w, &n, Some(0.0)).unwrap();
        let noise: Vec<f64> = y.samples.iter().map(|v| v - 1.0).collect();
        // looped [1,-1,1,-1,...] has power 1, so scale is 1
        assert!((noise[0] - 1.0).abs() < 1e-12 && (noise[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn textures_are_unit_power_and_seeded() {
        for kind in NoiseKind::ALL {
            let a = generate_noise(kind, 4000, 16_000, 5);
            assert!((a.power() - 1.0).abs() < 1e-9);
            assert_eq!(a, generate_noise(kind, 4000, 16_000, 5));
            assert_ne!(a, generate_noise(kind, 4000, 16_000, 6));
        }
    }
}
