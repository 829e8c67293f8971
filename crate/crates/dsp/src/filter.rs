//! Linear-phase windowed-sinc low-pass filtering.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{DspError, Result};
use crate::waveform::Waveform;

/// Transition band width centred on the cutoff.
pub const TRANSITION_HZ: f64 = 200.0;
/// Design stopband attenuation for the Kaiser window.
pub const ATTENUATION_DB: f64 = 75.0;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Odd-length Kaiser-windowed sinc taps, normalized to unit DC gain.
pub fn lowpass_taps(cutoff_hz: f64, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let beta = 0.1102 * (ATTENUATION_DB - 8.7);
    let dw = 2.0 * PI * TRANSITION_HZ / fs;
    let mut n = ((ATTENUATION_DB - 8.0) / (2.285 * dw)).ceil() as usize + 1;
    if n.is_multiple_of(2) {
        n += 1;
    }
    let fc = cutoff_hz / fs;
    let mid = (n - 1) as f64 / 2.0;
    let i0b = bessel_i0(beta);
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let m = i as f64 - mid;
            let sinc = if m == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * m).sin() / (PI * m)
            };
            let r = m / mid;
            sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= dc;
    }
    taps
}

/// Zero-padded convolution with the group delay removed (output aligned with
/// input), computed as one FFT product.
pub fn filter_aligned(x: &[f64], taps: &[f64]) -> Vec<f64> {
    if x.is_empty() || taps.is_empty() {
        return vec![0.0; x.len()];
    }
    let half = (taps.len() - 1) / 2;
    let n = (x.len() + taps.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let padded = |v: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for (b, &s) in buf.iter_mut().zip(v) {
            b.re = s;
        }
        buf
    };
    let mut a = padded(x);
    let mut b = padded(taps);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[half..half + x.len()].iter().map(|c| c.re * scale).collect()
}

/// Low-pass `w` at `cutoff_hz` (the -6 dB point), `0 < cutoff_hz < nyquist`.
pub fn lowpass(w: &Waveform, cutoff_hz: f64) -> Result<Waveform> {
    let nyquist = w.nyquist();
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(DspError::CutoffOutOfRange {
            cutoff_hz,
            nyquist_hz: nyquist,
        });
    }
    let taps = lowpass_taps(cutoff_hz, w.sample_rate);
    Ok(Waveform::new(filter_aligned(&w.samples, &taps), w.sample_rate))
}
