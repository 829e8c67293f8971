//! `evaluate`: restoration metrics of a saved state over a manifest.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use srflow_dsp::SAMPLE_RATE;
use srflow_eval::{evaluate_corpus, EvalItem, MetricsReport, TemplateBank};
use srflow_flow::ModelState;

use crate::artifact::{ensure_dir, write_run_record};
use crate::config::RunConfig;
use crate::manifest::load_split;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

pub fn eval_items(manifest: &Path) -> Result<Vec<EvalItem>> {
    let split = load_split(manifest)?;
    Ok(split
        .entries
        .iter()
        .zip(split.waves)
        .zip(split.records)
        .map(|((e, clean), record)| EvalItem {
            id: e.id.clone(),
            clean,
            labels: e.labels(),
            record,
        })
        .collect())
}

/// Scores `state` on every utterance of `manifest` under every configured
/// condition and writes the report as JSON and as a table.
pub fn evaluate_state(cfg: &RunConfig, state: &ModelState, manifest: &Path, out: &Path) -> Result<MetricsReport> {
    let fingerprint = cfg.fingerprint();
    if !state.config_fingerprint.is_empty() && state.config_fingerprint != fingerprint {
        log::warn!(
            "state was trained under configuration {}, evaluating under {}",
            state.config_fingerprint,
            fingerprint
        );
    }
    let items = eval_items(manifest)?;
    let bank = TemplateBank::for_vocab(cfg.corpus.vocab_size, SAMPLE_RATE)?;
    let report = evaluate_corpus(state, &items, &cfg.evaluation, &bank, &fingerprint)?;
    ensure_dir(out)?;
    write_run_record(out, "evaluate", cfg)?;
    let json = out.join(REPORT_JSON);
    fs::write(&json, report.to_json()).with_context(|| format!("writing {}", json.display()))?;
    let txt = out.join(REPORT_TXT);
    fs::write(&txt, report.render_table()).with_context(|| format!("writing {}", txt.display()))?;
    Ok(report)
}

pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, manifest: &Path, out: &Path) -> Result<MetricsReport> {
    let state = ModelState::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    evaluate_state(cfg, &state, manifest, out)
}
