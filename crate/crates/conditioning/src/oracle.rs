//! Record oracle: semantic records derived directly from synthesis labels,
//! standing in for an audio-language model's description of the input.

use rand::Rng;
use srflow_dsp::DegradationSpec;

use crate::record::{CoTRecord, Gender};

/// Voices below this median F0 are labelled male.
pub const MALE_F0_LIMIT_HZ: f64 = 165.0;

pub fn gender_for_f0(f0_hz: f64) -> Gender {
    if f0_hz < MALE_F0_LIMIT_HZ {
        Gender::Male
    } else {
        Gender::Female
    }
}

/// Noise word for a degradation; `"none"` when no noise was mixed in.
pub fn noise_word(d: &DegradationSpec) -> &'static str {
    match d.snr_db {
        None => "none",
        Some(_) => d.noise_kind.describe(),
    }
}

/// Coarse perceived-quality descriptors for a degradation.
pub fn quality_descriptors(d: &DegradationSpec, sample_rate: u32) -> Vec<String> {
    let nyquist = sample_rate as f64 / 2.0;
    let mut q = Vec::new();
    let c = d.cutoff_hz;
    q.push(
        if c >= nyquist {
            "full bandwidth"
        } else if c < 1500.0 {
            "very low bandwidth"
        } else if c < 2500.0 {
            "low bandwidth"
        } else if c < 3500.0 {
            "narrowband"
        } else {
            "limited bandwidth"
        }
        .to_string(),
    );
    if c < 2500.0 {
        q.push("muffled".into());
    }
    q.push(
        match d.snr_db {
            None => "clean",
            Some(s) if s < 8.0 => "noisy",
            Some(s) if s < 12.0 => "moderate noise",
            Some(_) => "slight noise",
        }
        .to_string(),
    );
    q
}

/// Ground-truth facts the oracle describes.
#[derive(Debug, Clone)]
pub struct OracleLabels<'a> {
    pub tokens: &'a [String],
    pub f0_hz: f64,
    pub emotion: &'a str,
    pub degradation: &'a DegradationSpec,
    pub sample_rate: u32,
}

pub fn oracle_record(l: &OracleLabels<'_>) -> CoTRecord {
    CoTRecord::new(
        gender_for_f0(l.f0_hz),
        l.emotion,
        noise_word(l.degradation),
        l.tokens.to_vec(),
        quality_descriptors(l.degradation, l.sample_rate),
    )
}

/// Replaces each content token, with probability `p`, by a different token
/// drawn uniformly from `pool`.
pub fn corrupt_record<R: Rng + ?Sized>(r: &CoTRecord, p: f64, pool: &[String], rng: &mut R) -> CoTRecord {
    let mut out = r.clone();
    for w in out.content.iter_mut() {
        if rng.random::<f64>() < p {
            let others: Vec<&String> = pool.iter().filter(|t| *t != w).collect();
            if !others.is_empty() {
                *w = others[rng.random_range(0..others.len())].clone();
            }
        }
    }
    out
}
