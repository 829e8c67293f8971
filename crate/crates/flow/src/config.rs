use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

/// Shape of the velocity network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiTConfig {
    pub depth: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    /// Coefficients per latent frame.
    pub latent_dim: usize,
    /// Longest frame sequence attended at once; longer inputs are chunked.
    pub max_frames: usize,
    /// Width of the conditioning tokens and global vector.
    pub cond_width: usize,
    /// Hidden width of each block's MLP as a multiple of `model_dim`.
    pub mlp_ratio: usize,
    /// Size of the sinusoidal timestep features.
    pub time_embed_dim: usize,
    pub seed: u64,
}

impl Default for DiTConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            model_dim: 128,
            num_heads: 4,
            latent_dim: 64,
            max_frames: 128,
            cond_width: 64,
            mlp_ratio: 2,
            time_embed_dim: 64,
            seed: 0,
        }
    }
}

impl DiTConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("depth", self.depth),
            ("model_dim", self.model_dim),
            ("num_heads", self.num_heads),
            ("latent_dim", self.latent_dim),
            ("max_frames", self.max_frames),
            ("cond_width", self.cond_width),
            ("mlp_ratio", self.mlp_ratio),
            ("time_embed_dim", self.time_embed_dim),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(FlowError::Config(format!("{name} must be positive")));
        }
        if !self.model_dim.is_multiple_of(self.num_heads) {
            return Err(FlowError::Config(format!(
                "model_dim {} is not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if !self.time_embed_dim.is_multiple_of(2) {
            return Err(FlowError::Config("time_embed_dim must be even".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }
}
