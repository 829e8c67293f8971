//! `train`: rectified-flow training on the synthetic corpus.
//!
//! Each step draws its batch, degradations, crops and flow noise from
//! separate per-step streams of the training seed. Runs that differ only in
//! their ablation flags therefore see the same utterances in the same order
//! with the same degradations, and a resumed run repeats exactly what an
//! uninterrupted one would have done.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use srflow_conditioning::oracle::quality_descriptors;
use srflow_conditioning::vocab::words;
use srflow_conditioning::{oracle::noise_word, CoTRecord, Vocab};
use srflow_dsp::synth::token_name;
use srflow_dsp::{mdct_encode, DegradationSpec, NoiseKind, NormStats, SAMPLE_RATE};
use srflow_flow::{
    latent_tensor, prepare_item, step_rng, train_step, validation_loss, ModelState, OptimConfig, StepStream, TrainItem,
};
use srflow_numerics::Tensor;

use crate::artifact::{ensure_dir, jsonl, read_json, write_json, write_run_record};
use crate::config::RunConfig;
use crate::manifest::{load_split, manifest_file, Split};

pub const LOSS_LOG: &str = "loss.jsonl";
pub const VAL_LOG: &str = "val.jsonl";
pub const TRAIN_SUMMARY: &str = "train.json";
pub const BEST: &str = "best";
pub const LAST: &str = "last";
/// Width of the moving average used to summarize the loss curve.
pub const LOSS_WINDOW: usize = 20;
const VAL_SALT: u64 = 0x7661_6c69_6461_7465;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossLine {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
    /// Training utterances in the batch, in batch order.
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValLine {
    /// Optimizer steps completed when the loss was measured.
    pub step: u64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_fingerprint: String,
    pub steps: u64,
    pub train_utterances: usize,
    pub val_utterances: usize,
    pub vocab_id: String,
    pub stats_id: String,
    /// Mean training loss over the first and last [`LOSS_WINDOW`] steps.
    pub initial_loss_avg: f64,
    pub final_loss_avg: f64,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub best_step: u64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Stem of a saved state to continue from.
    pub resume: Option<PathBuf>,
    /// Stop once this many steps are complete, keeping the configured
    /// schedule; the default runs to `training.steps`.
    pub stop_after: Option<u64>,
}

/// Every word a training or evaluation record can contain: the corpus
/// records, all content tokens and the descriptions of every degradation
/// the sampler and the evaluation conditions can produce.
pub fn build_vocab(cfg: &RunConfig, records: &[CoTRecord]) -> Vocab {
    let mut all: Vec<String> = Vec::new();
    for r in records {
        all.extend(words(&r.emotion));
        all.extend(words(&r.noise));
        all.extend(r.content.iter().cloned());
        r.quality.iter().for_each(|q| all.extend(words(q)));
    }
    all.extend((0..cfg.corpus.vocab_size).map(token_name));
    let mut cutoffs = cfg.degradation.cutoff_grid();
    cutoffs.extend(cfg.evaluation.conditions.iter().map(|c| c.cutoff_hz));
    let snrs = [
        None,
        Some(cfg.degradation.snr_min_db),
        Some(cfg.degradation.snr_max_db),
        Some(5.0),
        Some(10.0),
        Some(15.0),
    ];
    for &cutoff_hz in &cutoffs {
        for snr_db in snrs {
            for noise_kind in NoiseKind::ALL {
                let d = DegradationSpec {
                    cutoff_hz,
                    snr_db,
                    noise_kind,
                    rng_seed: 0,
                };
                all.extend(words(noise_word(&d)));
                quality_descriptors(&d, SAMPLE_RATE).iter().for_each(|q| all.extend(words(q)));
            }
        }
    }
    Vocab::build(all)
}

/// Fresh state for `cfg`: vocabulary, latent statistics of the clean
/// training audio and initial parameters.
pub fn new_state(cfg: &RunConfig, train: &Split) -> Result<ModelState> {
    let latents = train
        .waves
        .iter()
        .map(|w| mdct_encode(w, cfg.model.latent_dim))
        .collect::<srflow_dsp::Result<Vec<_>>>()?;
    let fingerprint = cfg.fingerprint();
    let stats = NormStats::fit(format!("train-{}", &fingerprint[..12]), &latents)?;
    let optim = OptimConfig {
        lr: cfg.training.peak_lr,
        weight_decay: cfg.training.weight_decay,
        ..OptimConfig::default()
    };
    let mut state = ModelState::new(
        cfg.model,
        cfg.conditioning,
        cfg.ablation,
        build_vocab(cfg, &train.records),
        stats,
        optim,
        cfg.training.seed,
    )?;
    state.config_fingerprint = fingerprint;
    Ok(state)
}

fn clean_latents(state: &ModelState, split: &Split) -> Result<Vec<Tensor>> {
    split
        .waves
        .iter()
        .map(|w| Ok(latent_tensor(&state.stats.normalize(&mdct_encode(w, state.dit.latent_dim)?))?))
        .collect()
}

/// The training items of step `step`.
pub fn step_batch(cfg: &RunConfig, state: &ModelState, train: &Split, x1: &[Tensor], step: u64) -> Result<Vec<TrainItem>> {
    let mut pick = step_rng(state.seed, step, StepStream::Batch);
    let mut degr = step_rng(state.seed, step, StepStream::Degradation);
    let mut crop = step_rng(state.seed, step, StepStream::Crop);
    (0..cfg.training.batch)
        .map(|_| {
            let i = pick.random_range(0..train.len());
            let d = cfg.degradation.sample(&mut degr);
            let e = &train.entries[i];
            let item = prepare_item(state, &e.id, &train.waves[i], &train.records[i], &d, Some(&x1[i]))
                .with_context(|| format!("preparing {}", e.id))?;
            Ok(item.crop(state.dit.max_frames, &mut crop)?)
        })
        .collect()
}

/// Validation items under each utterance's reference degradation, cropped
/// at fixed offsets.
pub fn validation_items(state: &ModelState, val: &Split) -> Result<Vec<TrainItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(state.seed ^ VAL_SALT);
    val.entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let item = prepare_item(state, &e.id, &val.waves[i], &val.records[i], &e.degradation, None)?;
            Ok(item.crop(state.dit.max_frames, &mut rng)?)
        })
        .collect()
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).with_context(|| format!("parsing {}", path.display())))
        .collect()
}

pub fn read_loss_log(dir: &Path) -> Result<Vec<LossLine>> {
    read_lines(&dir.join(LOSS_LOG))
}

pub fn read_val_log(dir: &Path) -> Result<Vec<ValLine>> {
    read_lines(&dir.join(VAL_LOG))
}

fn append(path: &Path, text: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    f.write_all(text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn window_mean(losses: &[f64], from_end: bool) -> f64 {
    let n = losses.len().min(LOSS_WINDOW).max(1);
    let w = if from_end { &losses[losses.len().saturating_sub(n)..] } else { &losses[..n.min(losses.len())] };
    w.iter().sum::<f64>() / w.len().max(1) as f64
}

/// Trains on `<data>/train.jsonl`, validating on `<data>/val.jsonl`, and
/// writes logs, the best and last states and a summary into `out`.
pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path, opts: &TrainOptions) -> Result<TrainSummary> {
    let fingerprint = cfg.fingerprint();
    let train = load_split(&data.join(manifest_file("train")))?;
    let val = load_split(&data.join(manifest_file("val")))?;
    ensure_dir(out)?;
    write_run_record(out, "train", cfg)?;

    let mut state = match &opts.resume {
        Some(stem) => {
            let s = ModelState::load(stem).with_context(|| format!("loading {}", stem.display()))?;
            if s.dit != cfg.model || s.cond != cfg.conditioning || s.ablation != cfg.ablation || s.seed != cfg.training.seed {
                bail!("state {} was trained with a different model, ablation or seed", stem.display());
            }
            s
        }
        None => {
            for f in [LOSS_LOG, VAL_LOG] {
                let p = out.join(f);
                if p.exists() {
                    fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
                }
            }
            new_state(cfg, &train)?
        }
    };
    let schedule = cfg.training.schedule();
    let x1 = clean_latents(&state, &train)?;
    let val_items = validation_items(&state, &val)?;
    let val_seed = cfg.training.seed ^ VAL_SALT;
    let loss_path = out.join(LOSS_LOG);
    let val_path = out.join(VAL_LOG);

    let mut best = read_val_log(out)?
        .into_iter()
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
        .map(|v| (v.val_loss, v.step));
    if opts.resume.is_none() {
        let v = validation_loss(&state, &val_items, val_seed)?;
        append(&val_path, &jsonl(&[ValLine { step: 0, val_loss: v }])?)?;
        log::info!("step 0: validation loss {v:.4}");
        best = Some((v, 0));
        state.save(&out.join(BEST))?;
    }

    let end = opts.stop_after.unwrap_or(cfg.training.steps).min(cfg.training.steps);
    while state.step < end {
        let step = state.step;
        let batch = step_batch(cfg, &state, &train, &x1, step)?;
        let r = train_step(&mut state, &batch, &schedule)?;
        let line = LossLine {
            step: r.step,
            loss: r.loss,
            grad_norm: r.grad_norm,
            lr: r.lr,
            items: batch.iter().map(|i| i.id.clone()).collect(),
        };
        append(&loss_path, &jsonl(&[line])?)?;
        let done = state.step;
        if done % cfg.training.validate_every == 0 || done == cfg.training.steps {
            let v = validation_loss(&state, &val_items, val_seed)?;
            append(&val_path, &jsonl(&[ValLine { step: done, val_loss: v }])?)?;
            log::info!("step {done}: train loss {:.4}, validation loss {v:.4}", r.loss);
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, done));
                state.save(&out.join(BEST))?;
            }
        }
    }
    state.save(&out.join(LAST))?;

    let losses: Vec<f64> = read_loss_log(out)?.iter().map(|l| l.loss).collect();
    let vals = read_val_log(out)?;
    let (best_val_loss, best_step) = best.unwrap_or((f64::NAN, 0));
    let summary = TrainSummary {
        config_fingerprint: fingerprint,
        steps: state.step,
        train_utterances: train.len(),
        val_utterances: val.len(),
        vocab_id: state.vocab.id().to_string(),
        stats_id: state.stats.id.clone(),
        initial_loss_avg: window_mean(&losses, false),
        final_loss_avg: window_mean(&losses, true),
        initial_val_loss: vals.first().map_or(f64::NAN, |v| v.val_loss),
        best_val_loss,
        best_step,
    };
    write_json(&out.join(TRAIN_SUMMARY), &summary)?;
    Ok(summary)
}

/// Reads a training summary written by [`cmd_train`].
pub fn read_summary(dir: &Path) -> Result<TrainSummary> {
    read_json(&dir.join(TRAIN_SUMMARY))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_means() {
        let l: Vec<f64> = (0..30).map(f64::from).collect();
        assert_eq!(window_mean(&l, false), 9.5);
        assert_eq!(window_mean(&l, true), 19.5);
        assert_eq!(window_mean(&[4.0], true), 4.0);
    }
}
