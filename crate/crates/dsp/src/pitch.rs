//! Normalized-autocorrelation pitch tracking.

use serde::{Deserialize, Serialize};

use crate::waveform::Waveform;

pub const MIN_F0_HZ: f64 = 60.0;
pub const MAX_F0_HZ: f64 = 500.0;
pub const VOICING_THRESHOLD: f64 = 0.5;
/// Strength penalty per octave of lag, favouring the shortest true period.
pub const OCTAVE_COST: f64 = 0.01;
pub const WINDOW_S: f64 = 0.032;
pub const HOP_S: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    /// Per-frame F0, 0 when unvoiced.
    pub f0_hz: Vec<f64>,
    pub voiced: Vec<bool>,
    pub hop_s: f64,
}

impl PitchTrack {
    pub fn voiced_f0(&self) -> impl Iterator<Item = f64> + '_ {
        self.f0_hz
            .iter()
            .zip(&self.voiced)
            .filter(|(_, &v)| v)
            .map(|(&f, _)| f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchStats {
    pub median_f0_hz: f64,
    pub log_f0_std: f64,
    pub voiced_fraction: f64,
}

impl PitchStats {
    pub const UNVOICED: PitchStats = PitchStats {
        median_f0_hz: 0.0,
        log_f0_std: 0.0,
        voiced_fraction: 0.0,
    };
}

pub fn track_pitch(w: &Waveform) -> PitchTrack {
    let fs = w.sample_rate as f64;
    let win = (WINDOW_S * fs).round() as usize;
    let hop = (HOP_S * fs).round() as usize;
    let min_lag = (fs / MAX_F0_HZ).floor() as usize;
    let max_lag = (fs / MIN_F0_HZ).ceil() as usize;
    let span = win + max_lag + 1;
    let x = &w.samples;
    let mut track = PitchTrack {
        f0_hz: Vec::new(),
        voiced: Vec::new(),
        hop_s: hop as f64 / fs,
    };
    if x.len() < span || hop == 0 {
        return track;
    }

    let mut prefix = vec![0.0; x.len() + 1];
    for (i, v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v * v;
    }
    let energy = |start: usize| prefix[start + win] - prefix[start];

    let frames = 1 + (x.len() - span) / hop;
    let mut r = vec![0.0; max_lag + 2];
    for f in 0..frames {
        let s = f * hop;
        let e0 = energy(s);
        let mut best: Option<(usize, f64)> = None;
        if e0 > 1e-12 {
            let seg = &x[s..s + win];
            for lag in min_lag - 1..=max_lag + 1 {
                let el = energy(s + lag);
                r[lag] = if el > 1e-12 {
                    let dot: f64 = seg.iter().zip(&x[s + lag..s + lag + win]).map(|(a, b)| a * b).sum();
                    dot / (e0 * el).sqrt()
                } else {
                    0.0
                };
            }
            for lag in min_lag..=max_lag {
                let is_peak = r[lag] > r[lag - 1] && r[lag] >= r[lag + 1];
                if !is_peak || r[lag] < VOICING_THRESHOLD {
                    continue;
                }
                let strength = r[lag] - OCTAVE_COST * (MIN_F0_HZ * lag as f64 / fs).log2();
                // Exact ties go to the longer lag (lower frequency).
                if best.is_none_or(|(_, b)| strength >= b) {
                    best = Some((lag, strength));
                }
            }
        }
        match best {
            Some((lag, _)) => {
                let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
                let denom = a - 2.0 * b + c;
                let shift = if denom.abs() > 1e-12 {
                    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
                } else {
                    0.0
                };
                let f0 = fs / (lag as f64 + shift);
                track.f0_hz.push(f0.clamp(MIN_F0_HZ, MAX_F0_HZ));
                track.voiced.push(true);
            }
            None => {
                track.f0_hz.push(0.0);
                track.voiced.push(false);
            }
        }
    }
    track
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn pitch_stats(t: &PitchTrack) -> PitchStats {
    let mut voiced: Vec<f64> = t.voiced_f0().collect();
    if voiced.is_empty() {
        return PitchStats::UNVOICED;
    }
    let n = voiced.len() as f64;
    let logs: Vec<f64> = voiced.iter().map(|f| f.ln()).collect();
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    PitchStats {
        median_f0_hz: median(&mut voiced),
        log_f0_std: var.sqrt(),
        voiced_fraction: n / t.voiced.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_track_stats() {
        let t = PitchTrack {
            f0_hz: vec![110.0; 20],
            voiced: vec![true; 20],
            hop_s: 0.01,
        };
        let s = pitch_stats(&t);
        assert_eq!(s.median_f0_hz, 110.0);
        assert!(s.log_f0_std.abs() < 1e-12);
        assert_eq!(s.voiced_fraction, 1.0);
    }

    #[test]
    fn unvoiced_and_empty_tracks_give_sentinel() {
        let t = PitchTrack {
            f0_hz: vec![0.0; 5],
            voiced: vec![false; 5],
            hop_s: 0.01,
        };
        assert_eq!(pitch_stats(&t), PitchStats::UNVOICED);
        let short = track_pitch(&Waveform::zeros(100, 16_000));
        assert!(short.f0_hz.is_empty());
        assert_eq!(pitch_stats(&short), PitchStats::UNVOICED);
    }

    #[test]
    fn silence_is_unvoiced() {
        let t = track_pitch(&Waveform::zeros(4000, 16_000));
        assert!(!t.voiced.is_empty() && t.voiced.iter().all(|v| !v));
    }
}
