//! Rectified-flow restoration over MDCT latents.
//!
//! A transformer velocity network maps noise to the clean latent of an
//! utterance, conditioned frame by frame on the latent of its degraded
//! version and globally on semantic and acoustic-prior embeddings. Training
//! regresses the constant velocity of straight noise-to-data paths; sampling
//! integrates the learned field with forward Euler steps.

pub mod check;
pub mod config;
pub mod dit;
pub mod error;
pub mod pipeline;
pub mod sample;
pub mod state;
pub mod toy;
pub mod train;

pub use check::training_loss_grad_check;
pub use config::DiTConfig;
pub use dit::{dit_forward, forward_graph, init_params};
pub use error::{FlowError, Result};
pub use pipeline::{
    condition, describe_degradation, latent_tensor, prepare_item, restore, ConditionedInput, Restoration, StageTimings,
    TrainItem, DEFAULT_STEPS,
};
pub use sample::{euler_sample, gaussian, make_flow_sample, rf_loss, FlowSample, VelocityField};
pub use state::{ModelState, OptimConfig};
pub use train::{batch_loss, step_rng, train_step, train_step_on, validation_loss, Schedule, StepReport, StepStream};
