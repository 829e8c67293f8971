//! The run configuration: one TOML file describing a whole experiment.
//!
//! Parsing is strict. Unknown keys and missing keys are errors, and every
//! seed is spelled out. The fingerprint is the SHA-256 of the configuration
//! serialized as compact JSON in declaration order, so two files that parse
//! to the same values share a fingerprint.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srflow_conditioning::{Ablation, ConditioningConfig};
use srflow_dsp::synth::{MAX_DURATION_S, MAX_F0_HZ, MAX_VOCAB, MIN_DURATION_S, MIN_F0_HZ};
use srflow_dsp::{DegradationSampler, SAMPLE_RATE};
use srflow_eval::EvalConfig;
use srflow_flow::{DiTConfig, Schedule};

use crate::error::CliError;

/// Synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// Total utterances over all splits.
    pub count: usize,
    pub utterances_per_speaker: usize,
    pub duration_min_s: f64,
    pub duration_max_s: f64,
    /// Range of speaker base F0.
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// Content tokens are drawn from the first `vocab_size` token names.
    pub vocab_size: usize,
    pub tokens_min: usize,
    pub tokens_max: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub steps: u64,
    pub batch: usize,
    pub seed: u64,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    /// Cosine floor as a fraction of the peak rate.
    pub final_lr_fraction: f64,
    /// Global gradient-norm bound; non-positive disables clipping.
    pub grad_clip: f64,
    pub weight_decay: f64,
    /// Validation loss is measured every this many steps and after the last.
    pub validate_every: u64,
}

impl TrainingConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            peak_lr: self.peak_lr,
            warmup_steps: self.warmup_steps,
            total_steps: self.steps,
            final_fraction: self.final_lr_fraction,
            grad_clip: self.grad_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    /// Training-time degradations.
    pub degradation: DegradationSampler,
    pub model: DiTConfig,
    pub conditioning: ConditioningConfig,
    pub training: TrainingConfig,
    pub evaluation: EvalConfig,
    #[serde(default)]
    pub ablation: Ablation,
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configuration serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let c = &self.corpus;
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        if c.count < 20 {
            return Err(invalid("corpus.count must be at least 20 so every split is non-empty"));
        }
        if c.utterances_per_speaker == 0 {
            return Err(invalid("corpus.utterances_per_speaker must be positive"));
        }
        if !(MIN_DURATION_S <= c.duration_min_s && c.duration_min_s <= c.duration_max_s && c.duration_max_s <= MAX_DURATION_S) {
            return Err(invalid(format!(
                "corpus duration range must satisfy {MIN_DURATION_S} <= min <= max <= {MAX_DURATION_S}"
            )));
        }
        if !(MIN_F0_HZ <= c.f0_min_hz && c.f0_min_hz <= c.f0_max_hz && c.f0_max_hz <= MAX_F0_HZ) {
            return Err(invalid(format!(
                "corpus F0 range must satisfy {MIN_F0_HZ} <= min <= max <= {MAX_F0_HZ}"
            )));
        }
        if c.vocab_size == 0 || c.vocab_size > MAX_VOCAB {
            return Err(invalid(format!("corpus.vocab_size must be in 1..={MAX_VOCAB}")));
        }
        if c.tokens_min == 0 || c.tokens_min > c.tokens_max {
            return Err(invalid("corpus token range must satisfy 1 <= tokens_min <= tokens_max"));
        }
        let d = &self.degradation;
        if !(0.0 < d.cutoff_min_hz && d.cutoff_min_hz <= d.cutoff_max_hz && d.cutoff_max_hz <= nyquist) {
            return Err(invalid(format!("degradation cutoffs must satisfy 0 < min <= max <= {nyquist}")));
        }
        if d.cutoff_step_hz <= 0.0 || d.snr_min_db > d.snr_max_db {
            return Err(invalid("degradation needs a positive cutoff step and snr_min_db <= snr_max_db"));
        }
        self.model.validate().map_err(|e| invalid(format!("model: {e}")))?;
        if self.conditioning.width != self.model.cond_width {
            return Err(invalid(format!(
                "conditioning.width {} differs from model.cond_width {}",
                self.conditioning.width, self.model.cond_width
            )));
        }
        if self.conditioning.fourier_k == 0 {
            return Err(invalid("conditioning.fourier_k must be positive"));
        }
        let t = &self.training;
        if t.steps == 0 || t.batch == 0 || t.validate_every == 0 || t.peak_lr <= 0.0 {
            return Err(invalid("training steps, batch, validate_every and peak_lr must be positive"));
        }
        let e = &self.evaluation;
        if e.conditions.is_empty() {
            return Err(invalid("evaluation.conditions must not be empty"));
        }
        if let Some(bad) = e.conditions.iter().find(|c| !(c.cutoff_hz > 0.0 && c.cutoff_hz <= nyquist)) {
            return Err(invalid(format!("evaluation cutoff {} Hz is outside (0, {nyquist}]", bad.cutoff_hz)));
        }
        if e.steps == 0 {
            return Err(invalid("evaluation.steps must be positive"));
        }
        Ok(())
    }
}
