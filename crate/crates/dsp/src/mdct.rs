//! MDCT latent codec: sine window, 50% overlap, time-domain alias cancellation.
//!
//! `frame_len` is the hop and the number of coefficients per frame; each frame
//! spans `2 * frame_len` samples. The signal is padded with `frame_len` zeros
//! in front so every input sample is covered by two frames, which makes the
//! round trip exact on the whole signal.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{DspError, Result};
use crate::waveform::Waveform;

/// `frames x dim` matrix of MDCT coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub frames: usize,
    pub dim: usize,
    pub values: Vec<f64>,
    /// Length of the encoded waveform, needed to undo padding.
    pub num_samples: usize,
    pub sample_rate: u32,
    /// Id of the [`NormStats`] these values are normalized with, if any.
    pub stats_id: Option<String>,
}

impl LatentSequence {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames_for(num_samples: usize, frame_len: usize) -> usize {
        num_samples.div_ceil(frame_len) + 1
    }
}

/// DCT-IV of even length `n` through an `n/2`-point complex FFT.
struct Dct4 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    pre: Vec<Complex<f64>>,
    post: Vec<Complex<f64>>,
}

impl Dct4 {
    fn new(n: usize) -> Self {
        let h = n / 2;
        let fft = FftPlanner::new().plan_fft_forward(h);
        let pre = (0..h)
            .map(|m| Complex::from_polar(1.0, -PI * (4 * m + 1) as f64 / (4 * n) as f64))
            .collect();
        let post = (0..h)
            .map(|m| Complex::from_polar(1.0, -PI * m as f64 / n as f64))
            .collect();
        Self { n, fft, pre, post }
    }

    fn process(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        let h = n / 2;
        let mut z: Vec<Complex<f64>> = (0..h)
            .map(|m| Complex::new(u[2 * m], u[n - 1 - 2 * m]) * self.pre[m])
            .collect();
        self.fft.process(&mut z);
        for m in 0..h {
            let y = z[m] * self.post[m];
            out[2 * m] = y.re;
            out[n - 1 - 2 * m] = -y.im;
        }
    }
}

pub struct Mdct {
    frame_len: usize,
    window: Vec<f64>,
    dct: Dct4,
}

impl Mdct {
    pub fn new(frame_len: usize) -> Result<Self> {
        if frame_len == 0 || !frame_len.is_multiple_of(2) {
            return Err(DspError::OddFrameLength(frame_len));
        }
        let window = (0..2 * frame_len)
            .map(|n| (PI * (n as f64 + 0.5) / (2 * frame_len) as f64).sin())
            .collect();
        Ok(Self {
            frame_len,
            window,
            dct: Dct4::new(frame_len),
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// Coefficients of one `2 * frame_len` block (window applied here).
    pub fn forward_block(&self, block: &[f64], out: &mut [f64]) {
        let m = self.frame_len;
        let h = m / 2;
        let x: Vec<f64> = block.iter().zip(&self.window).map(|(a, w)| a * w).collect();
        let (a, b, c, d) = (&x[..h], &x[h..m], &x[m..m + h], &x[m + h..]);
        let mut u = vec![0.0; m];
        for i in 0..h {
            u[i] = -c[h - 1 - i] - d[i];
            u[h + i] = a[i] - b[h - 1 - i];
        }
        self.dct.process(&u, out);
    }

    /// Windowed, scaled inverse of one frame, ready for overlap-add.
    pub fn inverse_block(&self, coeffs: &[f64], out: &mut [f64]) {
        let m = self.frame_len;
        let h = m / 2;
        let mut v = vec![0.0; m];
        self.dct.process(coeffs, &mut v);
        let scale = 2.0 / m as f64;
        for i in 0..h {
            out[i] = v[h + i];
            out[h + i] = -v[m - 1 - i];
            out[m + i] = -v[h - 1 - i];
            out[m + h + i] = -v[i];
        }
        for (o, w) in out.iter_mut().zip(&self.window) {
            *o *= w * scale;
        }
    }

    pub fn encode(&self, w: &Waveform) -> LatentSequence {
        let m = self.frame_len;
        let frames = LatentSequence::frames_for(w.len(), m);
        let mut padded = vec![0.0; (frames + 1) * m];
        padded[m..m + w.len()].copy_from_slice(&w.samples);
        let mut values = vec![0.0; frames * m];
        for t in 0..frames {
            self.forward_block(&padded[t * m..t * m + 2 * m], &mut values[t * m..(t + 1) * m]);
        }
        LatentSequence {
            frames,
            dim: m,
            values,
            num_samples: w.len(),
            sample_rate: w.sample_rate,
            stats_id: None,
        }
    }

    pub fn decode(&self, l: &LatentSequence) -> Result<Waveform> {
        let m = self.frame_len;
        if l.dim != m || l.values.len() != l.frames * l.dim {
            return Err(DspError::LatentShape(format!(
                "expected dim {m}, got {} x {} with {} values",
                l.frames,
                l.dim,
                l.values.len()
            )));
        }
        if l.frames != LatentSequence::frames_for(l.num_samples, m) {
            return Err(DspError::LatentShape(format!(
                "{} frames cannot hold {} samples",
                l.frames, l.num_samples
            )));
        }
        let mut out = vec![0.0; (l.frames + 1) * m];
        let mut block = vec![0.0; 2 * m];
        for t in 0..l.frames {
            self.inverse_block(l.frame(t), &mut block);
            for (o, b) in out[t * m..t * m + 2 * m].iter_mut().zip(&block) {
                *o += b;
            }
        }
        Ok(Waveform::new(out[m..m + l.num_samples].to_vec(), l.sample_rate))
    }
}

pub fn mdct_encode(w: &Waveform, frame_len: usize) -> Result<LatentSequence> {
    Ok(Mdct::new(frame_len)?.encode(w))
}

pub fn mdct_decode(l: &LatentSequence) -> Result<Waveform> {
    Mdct::new(l.dim)?.decode(l)
}

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub id: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-8;

impl NormStats {
    pub fn fit<'a>(id: impl Into<String>, latents: impl IntoIterator<Item = &'a LatentSequence>) -> Result<Self> {
        let mut dim = None;
        let (mut sum, mut sq, mut n) = (Vec::new(), Vec::new(), 0usize);
        for l in latents {
            let d = *dim.get_or_insert(l.dim);
            if l.dim != d {
                return Err(DspError::LatentShape(format!("mixed dims {d} and {}", l.dim)));
            }
            if sum.is_empty() {
                sum = vec![0.0; d];
                sq = vec![0.0; d];
            }
            for t in 0..l.frames {
                for (k, v) in l.frame(t).iter().enumerate() {
                    sum[k] += v;
                    sq[k] += v * v;
                }
            }
            n += l.frames;
        }
        if n == 0 {
            return Err(DspError::LatentShape("no frames to fit statistics".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n as f64 - m * m).max(0.0).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self {
            id: id.into(),
            mean,
            std,
        })
    }

    pub fn normalize(&self, l: &LatentSequence) -> LatentSequence {
        let mut out = l.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            let k = i % l.dim;
            *v = (*v - self.mean[k]) / self.std[k];
        }
        out.stats_id = Some(self.id.clone());
        out
    }

    pub fn denormalize(&self, l: &LatentSequence) -> LatentSequence {
        let mut out = l.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            let k = i % l.dim;
            *v = *v * self.std[k] + self.mean[k];
        }
        out.stats_id = None;
        out
    }
}
