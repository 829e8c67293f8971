//! Effective-bandwidth estimation from the long-term spectrum.

use crate::error::{DspError, Result};
use crate::spectrum::average_power_spectrum;
use crate::waveform::Waveform;

pub const GRID_STEP_HZ: f64 = 250.0;
/// Required drop of the mean power above the cutoff relative to below it.
pub const DROP_DB: f64 = 40.0;
pub const ANALYSIS_FFT: usize = 512;

/// Lowest grid frequency above which the mean band power sits at least
/// [`DROP_DB`] below the mean power beneath it; Nyquist when none does.
pub fn estimate_bandwidth(w: &Waveform) -> Result<f64> {
    let nyquist = w.nyquist();
    if w.len() < ANALYSIS_FFT {
        return Err(DspError::TooShort {
            len: w.len(),
            frame: ANALYSIS_FFT,
        });
    }
    if !(w.power() > 0.0) {
        return Err(DspError::SilentSignal);
    }
    let spec = average_power_spectrum(w, ANALYSIS_FFT)?;
    let bin_hz = w.sample_rate as f64 / ANALYSIS_FFT as f64;
    let ratio = 10f64.powf(-DROP_DB / 10.0);
    let steps = (nyquist / GRID_STEP_HZ).floor() as usize;
    for i in 1..steps {
        let f = i as f64 * GRID_STEP_HZ;
        // Bin 0 (DC) is excluded from the passband average.
        let split = (f / bin_hz).ceil() as usize;
        let below = &spec[1..split];
        let above = &spec[split..];
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let (lo, hi) = (mean(below), mean(above));
        if lo > 0.0 && hi <= lo * ratio {
            return Ok(f);
        }
    }
    Ok(nyquist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_and_short_inputs_error() {
        assert!(matches!(
            estimate_bandwidth(&Waveform::zeros(4000, 16_000)),
            Err(DspError::SilentSignal)
        ));
        assert!(estimate_bandwidth(&Waveform::new(vec![0.1; 100], 16_000)).is_err());
    }
}
