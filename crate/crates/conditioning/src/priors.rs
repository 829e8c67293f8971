//! Acoustic prior features: bandwidth Fourier features and pitch statistics.

use std::f64::consts::PI;

use srflow_dsp::PitchStats;

use crate::error::{ConditioningError, Result};

/// Number of log-spaced Fourier frequencies for the bandwidth embedding.
pub const FOURIER_K: usize = 8;
pub const FOURIER_MIN_FREQ: f64 = 1.0;
pub const FOURIER_MAX_FREQ: f64 = 64.0;
/// Scale that maps median F0 into roughly `[0, 1]`.
pub const F0_NORM_HZ: f64 = 500.0;
pub const PITCH_FEATURES: usize = 3;

/// `k` frequencies spaced evenly in log between 1 and 64.
pub fn fourier_frequencies(k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![FOURIER_MIN_FREQ],
        _ => {
            let ratio = (FOURIER_MAX_FREQ / FOURIER_MIN_FREQ).ln();
            (0..k)
                .map(|i| FOURIER_MIN_FREQ * (ratio * i as f64 / (k - 1) as f64).exp())
                .collect()
        }
    }
}

/// `[sin(2π f_k b) .., cos(2π f_k b) ..]` with `b = cutoff / Nyquist`.
pub fn fourier_embed_bandwidth(cutoff_hz: f64, k: usize, sample_rate: u32) -> Result<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz <= nyquist) {
        return Err(ConditioningError::CutoffOutOfRange { cutoff_hz, nyquist_hz: nyquist });
    }
    let b = cutoff_hz / nyquist;
    let freqs = fourier_frequencies(k);
    let mut out: Vec<f64> = freqs.iter().map(|f| (2.0 * PI * f * b).sin()).collect();
    out.extend(freqs.iter().map(|f| (2.0 * PI * f * b).cos()));
    Ok(out)
}

/// `(median F0 / 500 Hz, log-F0 std, voiced fraction)`.
pub fn pitch_features(s: &PitchStats) -> [f64; PITCH_FEATURES] {
    [s.median_f0_hz / F0_NORM_HZ, s.log_f0_std, s.voiced_fraction]
}
