//! `synth-data`: the synthetic corpus and its speaker-disjoint splits.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use srflow_conditioning::{oracle_record, ConditioningCache, OracleLabels, RecordSource};
use srflow_dsp::synth::token_name;
use srflow_dsp::{synth_utterance, write_wav, SpeakerProfile, SyntheticUtteranceSpec, SAMPLE_RATE};

use crate::artifact::{ensure_dir, write_json, write_run_record};
use crate::config::RunConfig;
use crate::manifest::{manifest_file, write_manifest, ManifestEntry, COT_CACHE_FILE, SPLITS};

pub const EMOTIONS: [&str; 4] = ["neutral", "calm", "happy", "sad"];
/// Fractions of utterances in the validation and test splits.
pub const HELD_OUT_FRACTION: f64 = 0.05;
pub const WAV_DIR: &str = "wavs";
pub const CORPUS_FILE: &str = "corpus.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub name: String,
    pub utterances: usize,
    pub speakers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub config_fingerprint: String,
    pub sample_rate: u32,
    pub splits: Vec<SplitSummary>,
}

struct Speaker {
    id: String,
    profile: SpeakerProfile,
    utterances: usize,
}

fn speakers(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Vec<Speaker> {
    let c = &cfg.corpus;
    let n = c.count.div_ceil(c.utterances_per_speaker);
    (0..n)
        .map(|i| {
            let f0 = rng.random_range(c.f0_min_hz..=c.f0_max_hz);
            Speaker {
                id: format!("spk{i:03}"),
                profile: SpeakerProfile::random(f0, rng),
                utterances: c.utterances_per_speaker.min(c.count - i * c.utterances_per_speaker),
            }
        })
        .collect()
}

/// Split index (0 train, 1 val, 2 test) of every speaker. Speakers are
/// visited in shuffled order and fill the test split, then validation,
/// until each holds its share of utterances.
fn assign_splits(speakers: &[Speaker], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let held_out = ((count as f64 * HELD_OUT_FRACTION).round() as usize).max(1);
    let mut order: Vec<usize> = (0..speakers.len()).collect();
    order.shuffle(rng);
    let mut split = vec![0; speakers.len()];
    let (mut test, mut val) = (0, 0);
    for i in order {
        if test < held_out {
            split[i] = 2;
            test += speakers[i].utterances;
        } else if val < held_out {
            split[i] = 1;
            val += speakers[i].utterances;
        }
    }
    split
}

/// Synthesizes the corpus into `out`: WAVs, one manifest per split, the
/// record store and a summary.
pub fn cmd_synth_data(cfg: &RunConfig, out: &Path) -> Result<CorpusSummary> {
    let c = &cfg.corpus;
    let fingerprint = cfg.fingerprint();
    ensure_dir(&out.join(WAV_DIR))?;
    let cache_path = out.join(COT_CACHE_FILE);
    if cache_path.exists() {
        fs::remove_file(&cache_path).with_context(|| format!("removing {}", cache_path.display()))?;
    }
    let mut cache = ConditioningCache::open(&cache_path)?;

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let speakers = speakers(cfg, &mut rng);
    let split_of = assign_splits(&speakers, c.count, &mut rng);
    let mut manifests: [Vec<ManifestEntry>; 3] = Default::default();
    for (s, spk) in speakers.iter().enumerate() {
        for k in 0..spk.utterances {
            let id = format!("{}_u{k:02}", spk.id);
            let n_tokens = rng.random_range(c.tokens_min..=c.tokens_max);
            let spec = SyntheticUtteranceSpec {
                f0_hz: spk.profile.f0_hz,
                vibrato_depth: rng.random_range(0.005..0.02),
                vibrato_rate_hz: rng.random_range(4.0..6.0),
                formants: spk.profile.formants.clone(),
                content_tokens: (0..n_tokens).map(|_| token_name(rng.random_range(0..c.vocab_size))).collect(),
                duration_s: rng.random_range(c.duration_min_s..=c.duration_max_s),
                rng_seed: rng.random(),
            };
            let emotion = EMOTIONS[rng.random_range(0..EMOTIONS.len())];
            let degradation = cfg.degradation.sample(&mut rng);
            let (wave, labels) = synth_utterance(&spec, SAMPLE_RATE).with_context(|| format!("synthesizing {id}"))?;
            let wav_path = format!("{WAV_DIR}/{id}.wav");
            write_wav(&out.join(&wav_path), &wave)?;
            let record = oracle_record(&OracleLabels {
                tokens: &labels.tokens,
                f0_hz: spk.profile.f0_hz,
                emotion,
                degradation: &degradation,
                sample_rate: SAMPLE_RATE,
            });
            cache.put(&id, record, RecordSource::Oracle)?;
            manifests[split_of[s]].push(ManifestEntry {
                id,
                wav_path,
                speaker: spk.id.clone(),
                f0_hz: labels.f0_hz,
                content_tokens: labels.tokens,
                slot_boundaries_s: labels.slot_boundaries_s,
                degradation,
            });
        }
    }
    cache.compact()?;

    let mut splits = Vec::new();
    for (name, entries) in SPLITS.iter().zip(&manifests) {
        write_manifest(&out.join(manifest_file(name)), entries)?;
        let mut spk: Vec<String> = entries.iter().map(|e| e.speaker.clone()).collect();
        spk.dedup();
        splits.push(SplitSummary {
            name: name.to_string(),
            utterances: entries.len(),
            speakers: spk,
        });
    }
    let summary = CorpusSummary {
        config_fingerprint: fingerprint,
        sample_rate: SAMPLE_RATE,
        splits,
    };
    write_json(&out.join(CORPUS_FILE), &summary)?;
    write_run_record(out, "synth-data", cfg)?;
    log::info!(
        "corpus: {} train / {} val / {} test utterances",
        manifests[0].len(),
        manifests[1].len(),
        manifests[2].len()
    );
    Ok(summary)
}
