//! Waveform-level plumbing around the network: conditioning a degraded input,
//! preparing training pairs and end-to-end restoration.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srflow_conditioning::oracle::{noise_word, quality_descriptors};
use srflow_conditioning::{CoTRecord, ConditioningInputs};
use srflow_dsp::{
    degrade, estimate_bandwidth, mdct_decode, mdct_encode, pitch_stats, track_pitch, DegradationSpec, LatentSequence,
    PitchStats, Waveform,
};
use srflow_numerics::Tensor;

use crate::dit::{dit_forward, frame_positions};
use crate::error::{FlowError, Result};
use crate::sample::{euler_sample, gaussian};
use crate::state::ModelState;

/// Sampler steps used unless a caller asks otherwise.
pub const DEFAULT_STEPS: usize = 32;

/// A record whose noise and quality fields describe `d` instead of whatever
/// degradation it was first written for.
pub fn describe_degradation(record: &CoTRecord, d: &DegradationSpec, sample_rate: u32) -> CoTRecord {
    let mut r = record.clone();
    r.noise = noise_word(d).to_string();
    r.quality = quality_descriptors(d, sample_rate);
    r
}

/// `[frames, dim]` view of a latent sequence.
pub fn latent_tensor(l: &LatentSequence) -> Result<Tensor> {
    Ok(Tensor::new(vec![l.frames, l.dim], l.values.clone())?)
}

/// Everything the network needs from a degraded waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedInput {
    /// Normalized latent of the degraded waveform.
    pub lr: LatentSequence,
    pub frame_pos: Vec<f64>,
    pub inputs: ConditioningInputs,
    pub cutoff_hz: f64,
    pub pitch: PitchStats,
}

/// Encodes `lr` and measures its priors. `lr` must be at the pipeline rate.
pub fn condition(state: &ModelState, lr: &Waveform, record: &CoTRecord) -> Result<ConditionedInput> {
    condition_encoded(state, lr, &mdct_encode(lr, state.dit.latent_dim)?, record)
}

/// [`condition`] for a waveform whose raw latent is already known.
pub fn condition_encoded(
    state: &ModelState,
    lr: &Waveform,
    encoded: &LatentSequence,
    record: &CoTRecord,
) -> Result<ConditionedInput> {
    let latent = state.stats.normalize(encoded);
    let cutoff_hz = estimate_bandwidth(lr)?;
    let pitch = pitch_stats(&track_pitch(lr));
    let inputs = ConditioningInputs::new(
        record,
        &state.vocab,
        cutoff_hz,
        lr.sample_rate,
        &pitch,
        &state.cond,
        &state.ablation,
    )?;
    let frame_pos = frame_positions(latent.frames, state.dit.latent_dim, lr.len());
    Ok(ConditionedInput {
        lr: latent,
        frame_pos,
        inputs,
        cutoff_hz,
        pitch,
    })
}

/// One training pair: clean and degraded latents of the same frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub id: String,
    /// Normalized clean latent, `[T, latent_dim]`.
    pub x1: Tensor,
    /// Normalized degraded latent, `[T, latent_dim]`.
    pub lr: Tensor,
    pub frame_pos: Vec<f64>,
    pub inputs: ConditioningInputs,
}

impl TrainItem {
    /// Crop of at most `max_frames` frames starting at a random frame.
    pub fn crop<R: Rng + ?Sized>(&self, max_frames: usize, rng: &mut R) -> Result<TrainItem> {
        let frames = self.x1.rows();
        if frames <= max_frames {
            return Ok(self.clone());
        }
        let start = rng.random_range(0..=frames - max_frames);
        let dim = self.x1.cols();
        let rows = |t: &Tensor| Tensor::new(vec![max_frames, dim], t.data()[start * dim..(start + max_frames) * dim].to_vec());
        Ok(TrainItem {
            id: self.id.clone(),
            x1: rows(&self.x1)?,
            lr: rows(&self.lr)?,
            frame_pos: self.frame_pos[start..start + max_frames].to_vec(),
            inputs: self.inputs.clone(),
        })
    }
}

/// Degrades `clean` by `d`, describes the result with `record` and pairs the
/// latents. `x1` may be passed in when the clean latent is already known.
pub fn prepare_item(
    state: &ModelState,
    id: &str,
    clean: &Waveform,
    record: &CoTRecord,
    d: &DegradationSpec,
    x1: Option<&Tensor>,
) -> Result<TrainItem> {
    let lr = degrade(clean, d)?.waveform;
    let record = describe_degradation(record, d, clean.sample_rate);
    let c = condition(state, &lr, &record)?;
    let x1 = match x1 {
        Some(t) => t.clone(),
        None => latent_tensor(&state.stats.normalize(&mdct_encode(clean, state.dit.latent_dim)?))?,
    };
    let lr_t = latent_tensor(&c.lr)?;
    if x1.shape() != lr_t.shape() {
        return Err(FlowError::FrameMismatch(format!(
            "clean latent {:?} vs degraded latent {:?}",
            x1.shape(),
            lr_t.shape()
        )));
    }
    Ok(TrainItem {
        id: id.to_string(),
        x1,
        lr: lr_t,
        frame_pos: c.frame_pos,
        inputs: c.inputs,
    })
}

/// Wall-clock time of each restoration stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub encode: Duration,
    pub condition: Duration,
    pub sample: Duration,
    pub decode: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restoration {
    pub waveform: Waveform,
    pub cutoff_hz: f64,
    pub pitch: PitchStats,
    pub timings: StageTimings,
}

/// Integrates the learned velocity from Gaussian noise drawn with `seed`,
/// conditioned on the degraded input.
pub fn sample_latent(state: &ModelState, c: &ConditionedInput, steps: usize, seed: u64) -> Result<Tensor> {
    let lr = latent_tensor(&c.lr)?;
    let x0 = gaussian(lr.shape(), &mut ChaCha8Rng::seed_from_u64(seed));
    let mut field = |x: &Tensor, t: f64| {
        dit_forward(&state.params, &state.dit, &state.cond, x, t, &lr, &c.frame_pos, &c.inputs)
    };
    euler_sample(&mut field, &x0, steps)
}

/// Full restoration of a degraded waveform.
pub fn restore(lr: &Waveform, record: &CoTRecord, state: &ModelState, steps: usize, seed: u64) -> Result<Restoration> {
    let mut timings = StageTimings::default();
    let t0 = Instant::now();
    let encoded = mdct_encode(lr, state.dit.latent_dim)?;
    timings.encode = t0.elapsed();

    let t0 = Instant::now();
    let c = condition_encoded(state, lr, &encoded, record)?;
    timings.condition = t0.elapsed();

    let t0 = Instant::now();
    let x = sample_latent(state, &c, steps, seed)?;
    timings.sample = t0.elapsed();

    let t0 = Instant::now();
    let latent = LatentSequence {
        values: x.into_data(),
        stats_id: Some(state.stats.id.clone()),
        ..encoded
    };
    let waveform = mdct_decode(&state.stats.denormalize(&latent))?;
    timings.decode = t0.elapsed();
    Ok(Restoration {
        waveform,
        cutoff_hz: c.cutoff_hz,
        pitch: c.pitch,
        timings,
    })
}
