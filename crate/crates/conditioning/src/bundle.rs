//! Learned conditioning embeddings and the dual-path bundle.
//!
//! The token path feeds cross-attention with `[c_sem ; token(c_bw) ;
//! token(c_pitch)]`. The global path `proj_bw(c_bw) + proj_pitch(c_pitch)` is
//! added to the timestep embedding. Every projection is a trainable parameter
//! stored under the `cond.` prefix of the model's [`ParamStore`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use srflow_dsp::PitchStats;
use srflow_numerics::{Bound, Graph, ParamStore, Tensor, Var};

use crate::error::{ConditioningError, Result};
use crate::priors::{fourier_embed_bandwidth, pitch_features, PITCH_FEATURES};
use crate::record::CoTRecord;
use crate::vocab::{SemanticMode, Vocab};

pub const SEM_TABLE: &str = "cond.sem_table";
pub const PITCH_W: &str = "cond.pitch.w";
pub const PITCH_B: &str = "cond.pitch.b";
pub const TOKEN_BW_W: &str = "cond.token_bw.w";
pub const TOKEN_BW_B: &str = "cond.token_bw.b";
pub const TOKEN_PITCH_W: &str = "cond.token_pitch.w";
pub const TOKEN_PITCH_B: &str = "cond.token_pitch.b";
pub const GLOBAL_BW_W: &str = "cond.global_bw.w";
pub const GLOBAL_BW_B: &str = "cond.global_bw.b";
pub const GLOBAL_PITCH_W: &str = "cond.global_pitch.w";
pub const GLOBAL_PITCH_B: &str = "cond.global_pitch.b";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningConfig {
    /// Width of semantic tokens, prior tokens and the global vector.
    pub width: usize,
    /// Number of Fourier frequencies; `c_bw` has `2 * fourier_k` entries.
    pub fourier_k: usize,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        Self {
            width: 64,
            fourier_k: crate::priors::FOURIER_K,
        }
    }
}

impl ConditioningConfig {
    pub fn bw_dim(&self) -> usize {
        2 * self.fourier_k
    }

    /// Adds freshly initialised conditioning parameters to `store`.
    pub fn init_params<R: Rng + ?Sized>(&self, vocab_size: usize, store: &mut ParamStore, rng: &mut R) {
        let (d, k2) = (self.width, self.bw_dim());
        store.insert(SEM_TABLE, Tensor::uniform(&[vocab_size, d], -1.0, 1.0, rng));
        for (w, b, fan_in) in [
            (PITCH_W, PITCH_B, PITCH_FEATURES),
            (TOKEN_BW_W, TOKEN_BW_B, k2),
            (TOKEN_PITCH_W, TOKEN_PITCH_B, d),
            (GLOBAL_BW_W, GLOBAL_BW_B, k2),
            (GLOBAL_PITCH_W, GLOBAL_PITCH_B, d),
        ] {
            store.insert(w, Tensor::fan_in_uniform(&[fan_in, d], fan_in, rng));
            store.insert(b, Tensor::zeros(&[d]));
        }
    }
}

/// Raw per-utterance conditioning inputs, before any learned projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningInputs {
    pub token_ids: Vec<usize>,
    /// Normalized utterance time of each semantic token, if it has one.
    pub token_positions: Vec<Option<f64>>,
    pub c_bw: Vec<f64>,
    pub pitch_features: [f64; PITCH_FEATURES],
}

/// Which conditioning signals are switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub disable_cot: bool,
    pub transcript_only: bool,
    pub disable_acoustic_priors: bool,
}

impl Ablation {
    pub fn semantic_mode(&self) -> SemanticMode {
        if self.disable_cot {
            SemanticMode::Disabled
        } else if self.transcript_only {
            SemanticMode::TranscriptOnly
        } else {
            SemanticMode::Full
        }
    }
}

impl ConditioningInputs {
    /// Gathers ids and prior features. With priors disabled both prior
    /// vectors are zero, so only the projection biases reach the model.
    pub fn new(
        record: &CoTRecord,
        vocab: &Vocab,
        cutoff_hz: f64,
        sample_rate: u32,
        pitch: &PitchStats,
        cfg: &ConditioningConfig,
        ablation: &Ablation,
    ) -> Result<Self> {
        let token_ids = vocab.encode(record, ablation.semantic_mode());
        let token_positions = vocab.token_positions(record, ablation.semantic_mode());
        let mut c_bw = fourier_embed_bandwidth(cutoff_hz, cfg.fourier_k, sample_rate)?;
        let mut pitch_features = pitch_features(pitch);
        if ablation.disable_acoustic_priors {
            c_bw.iter_mut().for_each(|v| *v = 0.0);
            pitch_features = [0.0; PITCH_FEATURES];
        }
        Ok(Self {
            token_ids,
            token_positions,
            c_bw,
            pitch_features,
        })
    }
}

fn width_check(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(ConditioningError::Width { what, expected, got })
    }
}

/// `[len, width]` rows of the semantic table.
pub fn semantic_tokens(g: &mut Graph, p: &Bound, ids: &[usize]) -> Result<Var> {
    let table = p.var(SEM_TABLE)?;
    Ok(g.embedding(table, ids)?)
}

/// `silu(features · W + b)`, a `[1, width]` row.
pub fn pitch_embedding(g: &mut Graph, p: &Bound, features: Var) -> Result<Var> {
    let y = g.linear(features, p.var(PITCH_W)?, Some(p.var(PITCH_B)?))?;
    Ok(g.silu(y)?)
}

/// Graph handles for an assembled bundle.
#[derive(Debug, Clone, Copy)]
pub struct BundleVars {
    /// `[len + 2, width]`.
    pub tokens: Var,
    /// `[1, width]`.
    pub global: Var,
}

/// Dual-path assembly from a `[len, width]` semantic block, a `[1, 2K]`
/// bandwidth row and a `[1, width]` pitch row.
pub fn assemble(g: &mut Graph, p: &Bound, cfg: &ConditioningConfig, sem: Var, c_bw: Var, c_pitch: Var) -> Result<BundleVars> {
    let sem_shape = g.shape(sem).to_vec();
    if sem_shape.len() != 2 || sem_shape[0] == 0 {
        return Err(ConditioningError::Width {
            what: "semantic rows",
            expected: 1,
            got: 0,
        });
    }
    width_check("semantic width", cfg.width, sem_shape[1])?;
    width_check("bandwidth features", cfg.bw_dim(), g.shape(c_bw).iter().product())?;
    width_check("pitch embedding", cfg.width, g.shape(c_pitch).iter().product())?;
    let c_bw = g.reshape(c_bw, &[1, cfg.bw_dim()])?;
    let c_pitch = g.reshape(c_pitch, &[1, cfg.width])?;
    let tok_bw = g.linear(c_bw, p.var(TOKEN_BW_W)?, Some(p.var(TOKEN_BW_B)?))?;
    let tok_pitch = g.linear(c_pitch, p.var(TOKEN_PITCH_W)?, Some(p.var(TOKEN_PITCH_B)?))?;
    let tokens = g.concat(&[sem, tok_bw, tok_pitch], 0)?;
    let glob_bw = g.linear(c_bw, p.var(GLOBAL_BW_W)?, Some(p.var(GLOBAL_BW_B)?))?;
    let glob_pitch = g.linear(c_pitch, p.var(GLOBAL_PITCH_W)?, Some(p.var(GLOBAL_PITCH_B)?))?;
    let global = g.add(glob_bw, glob_pitch)?;
    Ok(BundleVars { tokens, global })
}

/// Full conditioning path from raw inputs.
pub fn build_bundle(g: &mut Graph, p: &Bound, cfg: &ConditioningConfig, inputs: &ConditioningInputs) -> Result<BundleVars> {
    let sem = semantic_tokens(g, p, &inputs.token_ids)?;
    let c_bw = g.constant(Tensor::new(vec![1, inputs.c_bw.len()], inputs.c_bw.clone())?);
    let feats = g.constant(Tensor::new(vec![1, PITCH_FEATURES], inputs.pitch_features.to_vec())?);
    let c_pitch = pitch_embedding(g, p, feats)?;
    assemble(g, p, cfg, sem, c_bw, c_pitch)
}

/// Semantic token embeddings outside of training.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticEmbedding {
    /// `[len, width]`.
    pub values: Tensor,
    pub vocab_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    pub cross_attention_tokens: Tensor,
    pub global_vector: Vec<f64>,
}

impl ConditioningBundle {
    pub fn token_count(&self) -> usize {
        self.cross_attention_tokens.rows()
    }
}

pub fn embed_semantic(record: &CoTRecord, vocab: &Vocab, mode: SemanticMode, params: &ParamStore) -> Result<SemanticEmbedding> {
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let ids = vocab.encode(record, mode);
    let v = semantic_tokens(&mut g, &p, &ids)?;
    Ok(SemanticEmbedding {
        values: g.value(v).clone(),
        vocab_id: vocab.id().to_string(),
    })
}

pub fn embed_pitch_stats(stats: &PitchStats, params: &ParamStore) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let feats = g.constant(Tensor::new(vec![1, PITCH_FEATURES], pitch_features(stats).to_vec())?);
    let v = pitch_embedding(&mut g, &p, feats)?;
    Ok(g.value(v).data().to_vec())
}

pub fn assemble_conditioning(
    sem: &SemanticEmbedding,
    c_bw: &[f64],
    c_pitch: &[f64],
    params: &ParamStore,
    cfg: &ConditioningConfig,
) -> Result<ConditioningBundle> {
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let s = g.constant(sem.values.clone());
    let b = g.constant(Tensor::new(vec![1, c_bw.len()], c_bw.to_vec())?);
    let c = g.constant(Tensor::new(vec![1, c_pitch.len()], c_pitch.to_vec())?);
    let out = assemble(&mut g, &p, cfg, s, b, c)?;
    Ok(ConditioningBundle {
        cross_attention_tokens: g.value(out.tokens).clone(),
        global_vector: g.value(out.global).data().to_vec(),
    })
}
