//! Degradation: band limiting followed by additive noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DspError, Result};
use crate::filter::lowpass;
use crate::noise::{add_noise_at_snr, generate_noise, NoiseKind};
use crate::waveform::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSpec {
    pub cutoff_hz: f64,
    /// `None` means no noise is added.
    pub snr_db: Option<f64>,
    pub noise_kind: NoiseKind,
    #[serde(rename = "seed")]
    pub rng_seed: u64,
}

impl DegradationSpec {
    pub fn clean(cutoff_hz: f64) -> Self {
        Self {
            cutoff_hz,
            snr_db: None,
            noise_kind: NoiseKind::Pink,
            rng_seed: 0,
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz <= nyquist) {
            return Err(DspError::CutoffOutOfRange {
                cutoff_hz: self.cutoff_hz,
                nyquist_hz: nyquist,
            });
        }
        if let Some(s) = self.snr_db {
            if !s.is_finite() {
                return Err(DspError::InvalidSpec(format!("snr_db must be finite, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Degraded {
    pub waveform: Waveform,
    pub spec: DegradationSpec,
    /// Samples hard-limited to `[-1, 1]` after mixing.
    pub clipped: usize,
}

fn band_limit(w: &Waveform, cutoff_hz: f64) -> Result<Waveform> {
    if cutoff_hz >= w.nyquist() {
        Ok(w.clone())
    } else {
        lowpass(w, cutoff_hz)
    }
}

/// Low-pass then mix noise. The noise texture is band-limited to the same
/// cutoff, modelling a capture channel whose bandwidth bounds everything it
/// records. A cutoff at Nyquist skips filtering.
pub fn degrade(w: &Waveform, d: &DegradationSpec) -> Result<Degraded> {
    d.validate(w.sample_rate)?;
    let filtered = band_limit(w, d.cutoff_hz)?;
    let mut out = match d.snr_db {
        None => filtered,
        Some(snr) => {
            let noise = generate_noise(d.noise_kind, w.len(), w.sample_rate, d.rng_seed);
            let noise = band_limit(&noise, d.cutoff_hz)?;
            add_noise_at_snr(&filtered, &noise, Some(snr))?
        }
    };
    let clipped = out.clip();
    Ok(Degraded {
        waveform: out,
        spec: *d,
        clipped,
    })
}

/// Draws training degradations: cutoff uniform over a grid, SNR uniform in a range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSampler {
    pub cutoff_min_hz: f64,
    pub cutoff_max_hz: f64,
    pub cutoff_step_hz: f64,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
}

impl Default for DegradationSampler {
    fn default() -> Self {
        Self {
            cutoff_min_hz: 1000.0,
            cutoff_max_hz: 4000.0,
            cutoff_step_hz: 250.0,
            snr_min_db: 5.0,
            snr_max_db: 15.0,
        }
    }
}

impl DegradationSampler {
    pub fn cutoff_grid(&self) -> Vec<f64> {
        let n = ((self.cutoff_max_hz - self.cutoff_min_hz) / self.cutoff_step_hz).round() as usize;
        (0..=n)
            .map(|i| self.cutoff_min_hz + i as f64 * self.cutoff_step_hz)
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DegradationSpec {
        let grid = self.cutoff_grid();
        let cutoff_hz = grid[rng.random_range(0..grid.len())];
        let snr = if self.snr_max_db > self.snr_min_db {
            rng.random_range(self.snr_min_db..=self.snr_max_db)
        } else {
            self.snr_min_db
        };
        let noise_kind = NoiseKind::ALL[rng.random_range(0..NoiseKind::ALL.len())];
        DegradationSpec {
            cutoff_hz,
            snr_db: Some(snr),
            noise_kind,
            rng_seed: rng.random(),
        }
    }
}
