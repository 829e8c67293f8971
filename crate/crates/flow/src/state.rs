//! Trainable model state and its on-disk form.
//!
//! A saved state is three files sharing a stem: `<stem>.ckpt` holds the
//! parameters, `<stem>.optim.ckpt` the AdamW moments (first moments under
//! `m.<name>`, second under `v.<name>`) and `<stem>.json` everything else.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use srflow_conditioning::{Ablation, ConditioningConfig, Vocab};
use srflow_dsp::NormStats;
use srflow_numerics::{AdamWConfig, AdamWState, Checkpoint, ParamStore};

use crate::config::DiTConfig;
use crate::dit::init_params;
use crate::error::{FlowError, Result};

/// Optimizer settings that are saved with a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        let a = AdamWConfig::default();
        Self {
            lr: 1e-3,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            weight_decay: 0.0,
        }
    }
}

impl From<OptimConfig> for AdamWConfig {
    fn from(o: OptimConfig) -> Self {
        AdamWConfig {
            lr: o.lr,
            beta1: o.beta1,
            beta2: o.beta2,
            epsilon: o.epsilon,
            weight_decay: o.weight_decay,
        }
    }
}

/// Network, conditioning embeddings, optimizer and normalization in one place.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub dit: DiTConfig,
    pub cond: ConditioningConfig,
    pub ablation: Ablation,
    pub vocab: Vocab,
    pub stats: NormStats,
    pub params: ParamStore,
    pub optim: AdamWState,
    /// Completed optimizer steps.
    pub step: u64,
    /// Seed for initialisation and every per-step random draw.
    pub seed: u64,
    /// Hash of the run configuration that produced this state; empty when
    /// the state was not made by a configured run.
    pub config_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    dit: DiTConfig,
    cond: ConditioningConfig,
    ablation: Ablation,
    vocab: Vocab,
    stats: NormStats,
    optim: OptimConfig,
    optim_step: u64,
    step: u64,
    seed: u64,
    #[serde(default)]
    config_fingerprint: String,
}

fn io_err(path: &Path, source: std::io::Error) -> FlowError {
    FlowError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl ModelState {
    /// Freshly initialised state; parameters are drawn from `dit.seed`.
    pub fn new(
        dit: DiTConfig,
        cond: ConditioningConfig,
        ablation: Ablation,
        vocab: Vocab,
        stats: NormStats,
        optim: OptimConfig,
        seed: u64,
    ) -> Result<Self> {
        if stats.mean.len() != dit.latent_dim {
            return Err(FlowError::Config(format!(
                "normalization stats have {} dims, latent_dim is {}",
                stats.mean.len(),
                dit.latent_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(dit.seed);
        let params = init_params(&dit, &cond, vocab.len(), &mut rng)?;
        Ok(Self {
            dit,
            cond,
            ablation,
            vocab,
            stats,
            params,
            optim: AdamWState::new(optim.into()),
            step: 0,
            seed,
            config_fingerprint: String::new(),
        })
    }

    pub fn optim_config(&self) -> OptimConfig {
        let c = self.optim.config;
        OptimConfig {
            lr: c.lr,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
            weight_decay: c.weight_decay,
        }
    }

    /// Paths of the three files for `stem`.
    pub fn files(stem: &Path) -> [PathBuf; 3] {
        let with = |ext: &str| {
            let mut s = stem.as_os_str().to_os_string();
            s.push(ext);
            PathBuf::from(s)
        };
        [with(".ckpt"), with(".optim.ckpt"), with(".json")]
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        let [params_path, optim_path, sidecar_path] = Self::files(stem);
        Checkpoint {
            seed: self.seed,
            params: self.params.clone(),
        }
        .save(&params_path)?;
        let mut moments = ParamStore::new();
        for (k, t) in &self.optim.m {
            moments.insert(format!("m.{k}"), t.clone());
        }
        for (k, t) in &self.optim.v {
            moments.insert(format!("v.{k}"), t.clone());
        }
        Checkpoint {
            seed: self.seed,
            params: moments,
        }
        .save(&optim_path)?;
        let sidecar = Sidecar {
            dit: self.dit,
            cond: self.cond,
            ablation: self.ablation,
            vocab: self.vocab.clone(),
            stats: self.stats.clone(),
            optim: self.optim_config(),
            optim_step: self.optim.step,
            step: self.step,
            seed: self.seed,
            config_fingerprint: self.config_fingerprint.clone(),
        };
        let json = serde_json::to_string_pretty(&sidecar).map_err(|e| FlowError::Checkpoint(e.to_string()))?;
        std::fs::write(&sidecar_path, json + "\n").map_err(|e| io_err(&sidecar_path, e))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let [params_path, optim_path, sidecar_path] = Self::files(stem);
        let text = std::fs::read_to_string(&sidecar_path).map_err(|e| io_err(&sidecar_path, e))?;
        let s: Sidecar = serde_json::from_str(&text)
            .map_err(|e| FlowError::Checkpoint(format!("{}: {e}", sidecar_path.display())))?;
        s.dit.validate()?;
        let ck = Checkpoint::load(&params_path)?;
        if ck.seed != s.seed {
            return Err(FlowError::Checkpoint(format!(
                "parameter file seed {} differs from sidecar seed {}",
                ck.seed, s.seed
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let expected = init_params(&s.dit, &s.cond, s.vocab.len(), &mut rng)?;
        for (name, t) in expected.iter() {
            match ck.params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(FlowError::Checkpoint(format!(
                        "parameter {name} has shape {:?}, expected {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(FlowError::Checkpoint(format!("missing parameter {name}"))),
            }
        }
        if ck.params.len() != expected.len() {
            return Err(FlowError::Checkpoint(format!(
                "{} parameters stored, {} expected",
                ck.params.len(),
                expected.len()
            )));
        }
        let mut optim = AdamWState::new(s.optim.into());
        optim.step = s.optim_step;
        for (name, t) in Checkpoint::load(&optim_path)?.params.iter() {
            let (slot, key) = match name.split_once('.') {
                Some(("m", k)) => (&mut optim.m, k),
                Some(("v", k)) => (&mut optim.v, k),
                _ => return Err(FlowError::Checkpoint(format!("unexpected optimizer entry {name}"))),
            };
            slot.insert(key.to_string(), t.clone());
        }
        Ok(Self {
            dit: s.dit,
            cond: s.cond,
            ablation: s.ablation,
            vocab: s.vocab,
            stats: s.stats,
            params: ck.params,
            optim,
            step: s.step,
            seed: s.seed,
            config_fingerprint: s.config_fingerprint,
        })
    }
}
