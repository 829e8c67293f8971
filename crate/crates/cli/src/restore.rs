//! `restore`: one degraded WAV in, one restored WAV out.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use srflow_conditioning::{parse_cot, serialize_cot, CoTRecord, ConditioningCache};
use srflow_dsp::{read_wav, write_wav, SAMPLE_RATE};
use srflow_flow::{restore, ModelState, StageTimings};

use crate::artifact::{ensure_dir, write_json};
use crate::error::CliError;

/// Where the record describing the input comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CotSource {
    /// Record text in the `[Key]: value; ...` format.
    Text(String),
    /// Entry `id` of a record store.
    Cached { store: PathBuf, id: String },
}

impl CotSource {
    pub fn resolve(&self) -> Result<CoTRecord> {
        match self {
            CotSource::Text(t) => parse_cot(t).map_err(|e| CliError::Usage(format!("invalid record text: {e}")).into()),
            CotSource::Cached { store, id } => {
                let cache = ConditioningCache::open(store)?;
                cache
                    .get(id)
                    .cloned()
                    .ok_or_else(|| CliError::Usage(format!("no record {id:?} in {}", store.display())).into())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestoreRequest {
    /// Stem of a saved state.
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub cot: CotSource,
    pub output: PathBuf,
    pub steps: usize,
    pub seed: u64,
}

/// Written beside the restored WAV as `<output>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreRecord {
    pub config_fingerprint: String,
    pub checkpoint_step: u64,
    pub steps: usize,
    pub seed: u64,
    pub estimated_cutoff_hz: f64,
    pub median_f0_hz: f64,
    pub record: String,
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

pub fn cmd_restore(req: &RestoreRequest) -> Result<(RestoreRecord, StageTimings)> {
    if req.steps == 0 {
        return Err(CliError::Usage("--steps must be positive".into()).into());
    }
    let record = req.cot.resolve()?;
    let state = ModelState::load(&req.checkpoint).with_context(|| format!("loading {}", req.checkpoint.display()))?;
    let input = read_wav(&req.input)?;
    if input.sample_rate != SAMPLE_RATE {
        return Err(CliError::Usage(format!(
            "{} is sampled at {} Hz; resample it to {SAMPLE_RATE} Hz first",
            req.input.display(),
            input.sample_rate
        ))
        .into());
    }
    let r = restore(&input, &record, &state, req.steps, req.seed)?;
    if let Some(parent) = req.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_wav(&req.output, &r.waveform)?;
    let out = RestoreRecord {
        config_fingerprint: state.config_fingerprint.clone(),
        checkpoint_step: state.step,
        steps: req.steps,
        seed: req.seed,
        estimated_cutoff_hz: r.cutoff_hz,
        median_f0_hz: r.pitch.median_f0_hz,
        record: serialize_cot(&record),
    };
    write_json(&sidecar_path(&req.output), &out)?;
    Ok((out, r.timings))
}

/// One line per stage in milliseconds.
pub fn format_timings(t: &StageTimings) -> String {
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    format!(
        "encode {:.1} ms\ncondition {:.1} ms\nsample {:.1} ms\ndecode {:.1} ms\n",
        ms(t.encode),
        ms(t.condition),
        ms(t.sample),
        ms(t.decode)
    )
}
