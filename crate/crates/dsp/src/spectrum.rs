//! Short-time Fourier analysis.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{DspError, Result};
use crate::waveform::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

/// `T x F` magnitude matrix (row per frame) with its analysis parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub fft_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.magnitudes[t * self.bins..(t + 1) * self.bins]
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_len as f64
    }

    /// Keeps the first `frames` frames.
    pub fn truncated(&self, frames: usize) -> Spectrogram {
        let frames = frames.min(self.frames);
        Spectrogram {
            magnitudes: self.magnitudes[..frames * self.bins].to_vec(),
            frames,
            ..self.clone()
        }
    }
}

/// Magnitude STFT of full frames only; `F = fft_len / 2 + 1`.
pub fn stft_magnitude(w: &Waveform, fft_len: usize, hop: usize, window: Window) -> Result<Spectrogram> {
    if !fft_len.is_power_of_two() || fft_len < 2 {
        return Err(DspError::FftLength(fft_len));
    }
    if hop == 0 || hop > fft_len {
        return Err(DspError::Hop { hop, fft_len });
    }
    if w.len() < fft_len {
        return Err(DspError::TooShort {
            len: w.len(),
            frame: fft_len,
        });
    }
    let frames = 1 + (w.len() - fft_len) / hop;
    let bins = fft_len / 2 + 1;
    let win = window.coefficients(fft_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    let mut magnitudes = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let seg = &w.samples[t * hop..t * hop + fft_len];
        for ((b, &s), &c) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex::new(s * c, 0.0);
        }
        fft.process(&mut buf);
        magnitudes.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    Ok(Spectrogram {
        magnitudes,
        frames,
        bins,
        fft_len,
        hop,
        sample_rate: w.sample_rate,
    })
}

/// Time-averaged power per bin (Welch estimate, Hann window, 50% overlap).
pub fn average_power_spectrum(w: &Waveform, fft_len: usize) -> Result<Vec<f64>> {
    let spec = stft_magnitude(w, fft_len, fft_len / 2, Window::Hann)?;
    let mut avg = vec![0.0; spec.bins];
    for t in 0..spec.frames {
        for (a, m) in avg.iter_mut().zip(spec.frame(t)) {
            *a += m * m;
        }
    }
    for a in &mut avg {
        *a /= spec.frames as f64;
    }
    Ok(avg)
}

/// Applies a real-valued gain per FFT bin to a whole signal (zero-phase).
pub(crate) fn shape_spectrum(x: &[f64], sample_rate: u32, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let kk = if k <= n / 2 { k } else { n - k };
        let hz = kk as f64 * sample_rate as f64 / n as f64;
        *b *= gain(hz);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, len: usize) -> Waveform {
        let s = (0..len)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin() * 0.5)
            .collect();
        Waveform::new(s, 16_000)
    }

    #[test]
    fn tone_localizes_to_one_bin() {
        let spec = stft_magnitude(&tone(1000.0, 4000), 512, 128, Window::Hann).unwrap();
        let target = (1000.0 / (16_000.0 / 512.0)) as usize;
        for t in 0..spec.frames {
            let f = spec.frame(t);
            let argmax = (0..spec.bins).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
            assert!(argmax.abs_diff(target) <= 1);
        }
    }

    #[test]
    fn zero_signal_and_errors() {
        let z = Waveform::zeros(2048, 16_000);
        let spec = stft_magnitude(&z, 512, 128, Window::Hann).unwrap();
        assert!(spec.magnitudes.iter().all(|&m| m == 0.0));
        assert_eq!(spec.frames, 1 + (2048 - 512) / 128);
        assert!(matches!(
            stft_magnitude(&z, 500, 128, Window::Hann),
            Err(DspError::FftLength(500))
        ));
        assert!(stft_magnitude(&Waveform::zeros(100, 16_000), 512, 128, Window::Hann).is_err());
        assert!(stft_magnitude(&z, 512, 0, Window::Hann).is_err());
    }
}
