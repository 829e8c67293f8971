//! Rectified-flow regression training.
//!
//! Every random draw of step `s` comes from a ChaCha8 generator seeded with
//! the run seed and switched to a stream derived from `s`, so a run resumed
//! from a checkpoint continues exactly as if it had never stopped.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use srflow_numerics::{GradMap, Graph, NumericsError};

use crate::dit::forward_graph;
use crate::error::{FlowError, Result};
use crate::pipeline::TrainItem;
use crate::sample::{make_flow_sample, FlowSample};
use crate::state::ModelState;

/// Independent random streams available to one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStream {
    /// Which training items form the batch.
    Batch = 0,
    /// Degradations applied to the batch.
    Degradation = 1,
    /// Crop offsets.
    Crop = 2,
    /// Noise endpoints and times.
    Flow = 3,
}

const STREAMS_PER_STEP: u64 = 4;

/// Generator for one purpose within step `step` of a run seeded with `seed`.
pub fn step_rng(seed: u64, step: u64, stream: StepStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step.wrapping_mul(STREAMS_PER_STEP) + stream as u64);
    rng
}

/// Learning-rate schedule and step hygiene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    /// Floor of the cosine decay as a fraction of the peak.
    pub final_fraction: f64,
    /// Global gradient-norm bound; non-positive disables clipping.
    pub grad_clip: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            peak_lr: 1e-3,
            warmup_steps: 100,
            total_steps: 2000,
            final_fraction: 0.1,
            grad_clip: 1.0,
        }
    }
}

impl Schedule {
    /// Linear warmup to the peak, then cosine decay to `final_fraction`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.peak_lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let p = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * p).cos());
        self.peak_lr * (self.final_fraction + (1.0 - self.final_fraction) * cos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

/// Mean loss over `(item, sample)` pairs and, when `grads` is given, its
/// gradient with respect to every parameter.
pub fn batch_loss(state: &ModelState, pairs: &[(&TrainItem, &FlowSample)], mut grads: Option<&mut GradMap>) -> Result<f64> {
    if pairs.is_empty() {
        return Err(FlowError::EmptyBatch);
    }
    let weight = 1.0 / pairs.len() as f64;
    let mut total = 0.0;
    let mut g = Graph::new();
    for (item, s) in pairs {
        if s.xt.shape() != item.lr.shape() {
            return Err(FlowError::FrameMismatch(format!(
                "item {} has latent {:?} but conditioning {:?}",
                item.id,
                s.xt.shape(),
                item.lr.shape()
            )));
        }
        g.clear();
        let p = state.params.bind(&mut g);
        let xt = g.constant(s.xt.clone());
        let lr = g.constant(item.lr.clone());
        let v = forward_graph(&mut g, &p, &state.dit, &state.cond, xt, lr, s.t, &item.frame_pos, &item.inputs)
            .map_err(|e| diagnose(e, state, pairs))?;
        let target = g.constant(s.target_velocity.clone());
        let loss = g.mse(v, target).map_err(|e| diagnose(e.into(), state, pairs))?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(non_finite(state, value, pairs));
        }
        total += weight * value;
        if let Some(acc) = grads.as_deref_mut() {
            let gr = g.backward(loss).map_err(|_| non_finite(state, f64::NAN, pairs))?;
            p.accumulate_into(&gr, acc, weight);
        }
    }
    Ok(total)
}

fn non_finite(state: &ModelState, loss: f64, pairs: &[(&TrainItem, &FlowSample)]) -> FlowError {
    FlowError::NonFiniteLoss {
        loss,
        step: state.step,
        seed: state.seed,
        items: pairs.iter().map(|(i, _)| i.id.clone()).collect(),
    }
}

/// Non-finite values met inside the forward pass are reported like a
/// non-finite loss.
fn diagnose(e: FlowError, state: &ModelState, pairs: &[(&TrainItem, &FlowSample)]) -> FlowError {
    match e {
        FlowError::Numerics(NumericsError::NonFinite(_)) => non_finite(state, f64::NAN, pairs),
        other => other,
    }
}

fn clip(grads: &mut GradMap, bound: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|t| t.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if bound > 0.0 && norm > bound {
        let s = bound / norm;
        for t in grads.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// One AdamW update on given `(item, sample)` pairs.
pub fn train_step_on(state: &mut ModelState, pairs: &[(&TrainItem, &FlowSample)], schedule: &Schedule) -> Result<StepReport> {
    let mut grads = GradMap::new();
    let loss = batch_loss(state, pairs, Some(&mut grads))?;
    let grad_norm = clip(&mut grads, schedule.grad_clip);
    let lr = schedule.lr_at(state.step);
    state.optim.step(&mut state.params, &grads, Some(lr))?;
    let report = StepReport {
        step: state.step,
        loss,
        grad_norm,
        lr,
    };
    state.step += 1;
    Ok(report)
}

/// Draws a noise endpoint and time for every item from the step's flow
/// stream and takes one update. The reported loss is measured before the
/// update.
pub fn train_step(state: &mut ModelState, batch: &[TrainItem], schedule: &Schedule) -> Result<StepReport> {
    let mut rng = step_rng(state.seed, state.step, StepStream::Flow);
    let samples: Vec<FlowSample> = batch.iter().map(|i| make_flow_sample(&i.x1, &mut rng)).collect();
    let pairs: Vec<(&TrainItem, &FlowSample)> = batch.iter().zip(&samples).collect();
    train_step_on(state, &pairs, schedule)
}

/// Loss on fixed items with noise drawn from `seed`; parameters untouched.
pub fn validation_loss(state: &ModelState, items: &[TrainItem], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<FlowSample> = items.iter().map(|i| make_flow_sample(&i.x1, &mut rng)).collect();
    let pairs: Vec<(&TrainItem, &FlowSample)> = items.iter().zip(&samples).collect();
    batch_loss(state, &pairs, None)
}
