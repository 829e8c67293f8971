//! Corpus evaluation and its report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use srflow_conditioning::CoTRecord;
use srflow_dsp::{degrade, pitch_stats, track_pitch, DegradationSpec, NoiseKind, UtteranceLabels, Waveform};
use srflow_flow::{describe_degradation, restore, ModelState, DEFAULT_STEPS};

use crate::content::{content_error_rate, TemplateBank};
use crate::error::{EvalError, Result};
use crate::metrics::{lsd, lsd_highband, SpectralParams, LSD_EPS};
use crate::speaker::{proxy_speaker_embedding, raw_speaker_features, speaker_sim, SpeakerNormalizer};

/// Label carried by every report: word error rates come from the template
/// classifier, not from a speech recognizer.
pub const WER_SOURCE: &str = "content-proxy";
/// Largest tolerated fraction of failed utterances per condition.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// A test utterance with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub id: String,
    pub clean: Waveform,
    pub labels: UtteranceLabels,
    /// Record whose noise and quality fields are rewritten per condition.
    pub record: CoTRecord,
}

/// One degradation setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub cutoff_hz: f64,
    /// `None` evaluates band limiting alone.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub conditions: Vec<Condition>,
    pub steps: usize,
    pub seed: u64,
    pub noise_kind: NoiseKind,
    pub spectral: SpectralParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            conditions: vec![Condition {
                cutoff_hz: 2000.0,
                snr_db: None,
            }],
            steps: DEFAULT_STEPS,
            seed: 0,
            noise_kind: NoiseKind::Pink,
            spectral: SpectralParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub id: String,
    pub lsd: f64,
    /// LSD above the condition's cutoff.
    pub lsd_highband: f64,
    /// LSD of the degraded input itself.
    pub lsd_input: f64,
    /// Content-proxy word error rate (same quantity as `content_error_rate`).
    pub wer: f64,
    pub content_error_rate: f64,
    pub sim: f64,
    pub f0_ref_hz: f64,
    pub f0_restored_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub lsd: f64,
    pub lsd_highband: f64,
    pub lsd_input: f64,
    pub wer: f64,
    pub content_error_rate: f64,
    pub sim: f64,
}

impl Means {
    pub fn of(rows: &[UtteranceMetrics]) -> Result<Self> {
        if rows.is_empty() {
            return Err(EvalError::Empty("per-utterance metrics"));
        }
        let n = rows.len() as f64;
        let mean = |f: fn(&UtteranceMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            lsd: mean(|r| r.lsd),
            lsd_highband: mean(|r| r.lsd_highband),
            lsd_input: mean(|r| r.lsd_input),
            wer: mean(|r| r.wer),
            content_error_rate: mean(|r| r.content_error_rate),
            sim: mean(|r| r.sim),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub cutoff_hz: f64,
    pub snr_db: Option<f64>,
    pub n: usize,
    pub means: Means,
    pub failures: Vec<Failure>,
    pub per_utterance: Vec<UtteranceMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_fingerprint: String,
    pub wer_source: String,
    pub lsd_eps: f64,
    pub conditions: Vec<ConditionReport>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Plain-text table with one row per condition.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config {}", self.config_fingerprint);
        let _ = writeln!(
            s,
            "{:<24} {:>5} {:>10} {:>8} {:>8} {:>8} {:>10}",
            "condition", "n", "WER* (%)", "LSD", "LSD-HF", "SIM", "LSD input"
        );
        for c in &self.conditions {
            let snr = c.snr_db.map_or("clean".to_string(), |v| format!("{v:.0} dB"));
            let label = format!("{:.0} Hz / {snr}", c.cutoff_hz);
            let _ = writeln!(
                s,
                "{:<24} {:>5} {:>10.2} {:>8.3} {:>8.3} {:>8.3} {:>10.3}",
                label,
                c.n,
                100.0 * c.means.wer,
                c.means.lsd,
                c.means.lsd_highband,
                c.means.sim,
                c.means.lsd_input
            );
        }
        let _ = writeln!(s, "* WER source: {}", self.wer_source);
        s
    }
}

/// Deterministic per-(condition, utterance) seed.
pub fn derive_seed(seed: u64, condition: usize, item: usize, salt: u64) -> u64 {
    let mut z = seed ^ ((condition as u64) << 40) ^ ((item as u64) << 8) ^ salt;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Shared inputs for scoring restorations.
pub struct Scorer<'a> {
    pub bank: &'a TemplateBank,
    pub normalizer: &'a SpeakerNormalizer,
    pub spectral: SpectralParams,
}

impl Scorer<'_> {
    /// Metrics of `restored` (and of the degraded `input`) against `item`.
    pub fn score(&self, item: &EvalItem, input: &Waveform, restored: &Waveform, cutoff_hz: f64) -> Result<UtteranceMetrics> {
        let reference = self.spectral.spectrogram(&item.clean)?;
        let generated = self.spectral.spectrogram(restored)?;
        let degraded = self.spectral.spectrogram(input)?;
        let cer = content_error_rate(restored, &item.labels, self.bank)?;
        let e_ref = proxy_speaker_embedding(&item.clean, self.normalizer)?;
        let e_gen = proxy_speaker_embedding(restored, self.normalizer)?;
        Ok(UtteranceMetrics {
            id: item.id.clone(),
            lsd: lsd(&reference, &generated)?,
            lsd_highband: lsd_highband(&reference, &generated, cutoff_hz)?,
            lsd_input: lsd(&reference, &degraded)?,
            wer: cer,
            content_error_rate: cer,
            sim: speaker_sim(&e_ref, &e_gen)?,
            f0_ref_hz: pitch_stats(&track_pitch(&item.clean)).median_f0_hz,
            f0_restored_hz: pitch_stats(&track_pitch(restored)).median_f0_hz,
        })
    }
}

/// Evaluates `restorer` on every item under every condition.
///
/// `restorer` receives the degraded waveform, the record describing it and
/// a sampling seed. Failed utterances are reported and excluded; more than
/// [`MAX_FAILURE_FRACTION`] failures in a condition fail the run.
pub fn evaluate_with<F>(
    items: &[EvalItem],
    cfg: &EvalConfig,
    bank: &TemplateBank,
    fingerprint: &str,
    mut restorer: F,
) -> Result<MetricsReport>
where
    F: FnMut(&Waveform, &CoTRecord, u64) -> Result<Waveform>,
{
    if items.is_empty() {
        return Err(EvalError::Empty("manifest"));
    }
    if cfg.conditions.is_empty() {
        return Err(EvalError::Empty("condition list"));
    }
    let raw: Vec<Vec<f64>> = items
        .iter()
        .map(|i| raw_speaker_features(&i.clean))
        .collect::<Result<_>>()?;
    let normalizer = SpeakerNormalizer::fit(&raw)?;
    let scorer = Scorer {
        bank,
        normalizer: &normalizer,
        spectral: cfg.spectral,
    };
    let mut conditions = Vec::with_capacity(cfg.conditions.len());
    for (ci, c) in cfg.conditions.iter().enumerate() {
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for (ui, item) in items.iter().enumerate() {
            let d = DegradationSpec {
                cutoff_hz: c.cutoff_hz,
                snr_db: c.snr_db,
                noise_kind: cfg.noise_kind,
                rng_seed: derive_seed(cfg.seed, ci, ui, 1),
            };
            let result = (|| {
                let input = degrade(&item.clean, &d)?.waveform;
                let record = describe_degradation(&item.record, &d, item.clean.sample_rate);
                let restored = restorer(&input, &record, derive_seed(cfg.seed, ci, ui, 2))?;
                scorer.score(item, &input, &restored, c.cutoff_hz)
            })();
            match result {
                Ok(m) => rows.push(m),
                Err(e) => {
                    log::warn!("utterance {} failed: {e}", item.id);
                    failures.push(Failure {
                        id: item.id.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }
        if failures.len() as f64 > MAX_FAILURE_FRACTION * items.len() as f64 {
            return Err(EvalError::TooManyFailures {
                failed: failures.len(),
                total: items.len(),
                first: format!("{}: {}", failures[0].id, failures[0].error),
            });
        }
        conditions.push(ConditionReport {
            cutoff_hz: c.cutoff_hz,
            snr_db: c.snr_db,
            n: rows.len(),
            means: Means::of(&rows)?,
            failures,
            per_utterance: rows,
        });
    }
    Ok(MetricsReport {
        config_fingerprint: fingerprint.to_string(),
        wer_source: WER_SOURCE.to_string(),
        lsd_eps: LSD_EPS,
        conditions,
    })
}

/// Restores every item with `state` and scores the results.
pub fn evaluate_corpus(
    state: &ModelState,
    items: &[EvalItem],
    cfg: &EvalConfig,
    bank: &TemplateBank,
    fingerprint: &str,
) -> Result<MetricsReport> {
    evaluate_with(items, cfg, bank, fingerprint, |lr, record, seed| {
        Ok(restore(lr, record, state, cfg.steps, seed)?.waveform)
    })
}
