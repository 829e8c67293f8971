//! Content error of a restoration without a speech recognizer.
//!
//! Every content token of the synthetic corpus is a noise burst with a fixed
//! pattern over eight 500 Hz bands between 4 and 8 kHz. Each slot of a
//! waveform is classified by correlating its band energies with templates
//! measured on clean synthesis, and the classified sequence is scored with
//! the word error rate against the true tokens.

use srflow_dsp::synth::{parse_token, BASE_FORMANTS, HIGH_BAND_HZ, TOKEN_BAND_COUNT, TOKEN_BAND_WIDTH_HZ};
use srflow_dsp::{average_power_spectrum, synth_utterance, SyntheticUtteranceSpec, UtteranceLabels, Waveform};

use crate::error::{EvalError, Result};
use crate::metrics::wer;

const ANALYSIS_FFT: usize = 256;
const POWER_FLOOR: f64 = 1e-14;
const TEMPLATE_F0_HZ: f64 = 120.0;
const TEMPLATE_DURATION_S: f64 = 1.0;
const TEMPLATE_SEED: u64 = 0x5eed;

/// Log mean power of each token band over `[start_s, end_s)`.
pub fn band_features(w: &Waveform, start_s: f64, end_s: f64) -> Result<[f64; TOKEN_BAND_COUNT]> {
    let fs = w.sample_rate as f64;
    let a = ((start_s * fs).round().max(0.0) as usize).min(w.len());
    let b = ((end_s * fs).round().max(0.0) as usize).min(w.len());
    let mut seg = w.samples[a..b.max(a)].to_vec();
    if seg.len() < ANALYSIS_FFT {
        seg.resize(ANALYSIS_FFT, 0.0);
    }
    let power = average_power_spectrum(&Waveform::new(seg, w.sample_rate), ANALYSIS_FFT)?;
    let bin_hz = fs / ANALYSIS_FFT as f64;
    let mut out = [0.0; TOKEN_BAND_COUNT];
    for (band, o) in out.iter_mut().enumerate() {
        let lo = HIGH_BAND_HZ + band as f64 * TOKEN_BAND_WIDTH_HZ;
        let hi = lo + TOKEN_BAND_WIDTH_HZ;
        let (mut sum, mut n) = (0.0, 0usize);
        for (k, p) in power.iter().enumerate() {
            let hz = k as f64 * bin_hz;
            if hz >= lo && hz < hi {
                sum += p;
                n += 1;
            }
        }
        *o = (sum / n.max(1) as f64).max(POWER_FLOOR).log10();
    }
    Ok(out)
}

/// Pearson correlation; zero when either side is constant.
fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut num = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        num / (va * vb).sqrt()
    }
}

/// One band-energy template per token.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank {
    pub tokens: Vec<String>,
    pub templates: Vec<[f64; TOKEN_BAND_COUNT]>,
}

impl TemplateBank {
    /// Templates from a reference voice uttering each token alone.
    pub fn from_synthesis(tokens: &[String], sample_rate: u32) -> Result<Self> {
        if tokens.is_empty() {
            return Err(EvalError::EmptyBank);
        }
        let mut templates = Vec::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            let spec = SyntheticUtteranceSpec {
                f0_hz: TEMPLATE_F0_HZ,
                vibrato_depth: 0.0,
                vibrato_rate_hz: 5.0,
                formants: BASE_FORMANTS.to_vec(),
                content_tokens: vec![tok.clone()],
                duration_s: TEMPLATE_DURATION_S,
                rng_seed: TEMPLATE_SEED + i as u64,
            };
            let (w, labels) = synth_utterance(&spec, sample_rate)?;
            let (s, e) = labels.burst_region_s(0);
            templates.push(band_features(&w, s, e)?);
        }
        Ok(Self {
            tokens: tokens.to_vec(),
            templates,
        })
    }

    /// Token names `S0 .. S{n-1}`, each checked against the synthesizer.
    pub fn for_vocab(size: usize, sample_rate: u32) -> Result<Self> {
        let tokens: Vec<String> = (0..size).map(srflow_dsp::synth::token_name).collect();
        debug_assert!(tokens.iter().all(|t| parse_token(t).is_some()));
        Self::from_synthesis(&tokens, sample_rate)
    }

    /// Best-correlated token; ties go to the earlier template.
    pub fn classify_features(&self, f: &[f64; TOKEN_BAND_COUNT]) -> &str {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, t) in self.templates.iter().enumerate() {
            let c = correlation(f, t);
            if c > best.1 {
                best = (i, c);
            }
        }
        &self.tokens[best.0]
    }

    /// Classified token of every slot in `labels`.
    pub fn classify(&self, w: &Waveform, labels: &UtteranceLabels) -> Result<Vec<String>> {
        (0..labels.tokens.len())
            .map(|i| {
                let (s, e) = labels.burst_region_s(i);
                Ok(self.classify_features(&band_features(w, s, e)?).to_string())
            })
            .collect()
    }
}

/// Word error rate of the classified slot tokens against the true tokens.
pub fn content_error_rate(w: &Waveform, labels: &UtteranceLabels, bank: &TemplateBank) -> Result<f64> {
    let hyp = bank.classify(w, labels)?;
    wer(&labels.tokens, &hyp)
}
