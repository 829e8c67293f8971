//! Configurations and file helpers shared by the driver test suites.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use srflow_cli::RunConfig;
use srflow_eval::Condition;

pub const SMOKE: &str = include_str!("../../../../configs/smoke.toml");

pub fn smoke() -> RunConfig {
    RunConfig::parse(SMOKE).expect("shipped smoke config parses")
}

/// A configuration small enough to synthesize, train and evaluate in a few
/// seconds.
pub fn tiny() -> RunConfig {
    let mut c = smoke();
    c.corpus.count = 20;
    c.corpus.utterances_per_speaker = 2;
    c.corpus.duration_min_s = 0.5;
    c.corpus.duration_max_s = 0.6;
    c.model.depth = 1;
    c.model.model_dim = 16;
    c.model.num_heads = 2;
    c.model.latent_dim = 32;
    c.model.max_frames = 8;
    c.model.cond_width = 16;
    c.model.time_embed_dim = 16;
    c.conditioning.width = 16;
    c.conditioning.fourier_k = 4;
    c.training.steps = 6;
    c.training.batch = 2;
    c.training.warmup_steps = 2;
    c.training.validate_every = 3;
    c.evaluation.steps = 2;
    c.evaluation.conditions = vec![Condition {
        cutoff_hz: 2000.0,
        snr_db: Some(5.0),
    }];
    c.validate().expect("tiny config is valid");
    c
}

/// Contents of every file below `dir`, keyed by relative path.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable directory") {
            let p = entry.expect("directory entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("below root").to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

/// Relative paths whose contents differ between two trees, including
/// files present in only one of them.
pub fn tree_diff(a: &Path, b: &Path) -> Vec<String> {
    let (ta, tb) = (tree(a), tree(b));
    let mut keys: Vec<&String> = ta.keys().chain(tb.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter().filter(|k| ta.get(*k) != tb.get(*k)).cloned().collect()
}
