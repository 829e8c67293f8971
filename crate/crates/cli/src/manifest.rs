//! Corpus manifests: JSON lines, one utterance per line.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use srflow_conditioning::{CoTRecord, ConditioningCache};
use srflow_dsp::{read_wav, DegradationSpec, UtteranceLabels, Waveform};

/// Split names in the order they are written.
pub const SPLITS: [&str; 3] = ["train", "val", "test"];
/// Record store written next to the manifests.
pub const COT_CACHE_FILE: &str = "cot_cache.jsonl";

pub fn manifest_file(split: &str) -> String {
    format!("{split}.jsonl")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub wav_path: String,
    /// Identity of the synthetic voice; splits never share one.
    pub speaker: String,
    pub f0_hz: f64,
    pub content_tokens: Vec<String>,
    pub slot_boundaries_s: Vec<f64>,
    /// Reference degradation used for validation and for the cached record.
    pub degradation: DegradationSpec,
}

impl ManifestEntry {
    pub fn labels(&self) -> UtteranceLabels {
        UtteranceLabels {
            tokens: self.content_tokens.clone(),
            f0_hz: self.f0_hz,
            slot_boundaries_s: self.slot_boundaries_s.clone(),
        }
    }
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&serde_json::to_string(e)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parses a manifest; ids must be unique.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry =
            serde_json::from_str(line).with_context(|| format!("{}:{}: bad manifest entry", path.display(), i + 1))?;
        if !seen.insert(e.id.clone()) {
            bail!("{}:{}: duplicate id {}", path.display(), i + 1, e.id);
        }
        out.push(e);
    }
    Ok(out)
}

/// A manifest with its audio and cached records loaded.
#[derive(Debug, Clone)]
pub struct Split {
    pub entries: Vec<ManifestEntry>,
    pub waves: Vec<Waveform>,
    pub records: Vec<CoTRecord>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads the manifest at `path`, every WAV it names and each utterance's
/// record from the store beside it.
pub fn load_split(path: &Path) -> Result<Split> {
    let entries = read_manifest(path)?;
    if entries.is_empty() {
        bail!("{} lists no utterances", path.display());
    }
    let base = base_dir(path);
    let cache_path = base.join(COT_CACHE_FILE);
    if !cache_path.exists() {
        bail!("record store {} not found", cache_path.display());
    }
    let cache = ConditioningCache::open(&cache_path)?;
    let mut waves = Vec::with_capacity(entries.len());
    let mut records = Vec::with_capacity(entries.len());
    for e in &entries {
        waves.push(read_wav(&base.join(&e.wav_path))?);
        let r = cache
            .get(&e.id)
            .with_context(|| format!("no cached record for {} in {}", e.id, cache_path.display()))?;
        records.push(r.clone());
    }
    Ok(Split {
        entries,
        waves,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use srflow_dsp::NoiseKind;

    fn entry(id: &str) -> ManifestEntry {
        ManifestEntry {
            id: id.into(),
            wav_path: format!("wavs/{id}.wav"),
            speaker: "spk000".into(),
            f0_hz: 120.0,
            content_tokens: vec!["S1".into()],
            slot_boundaries_s: vec![0.0, 1.0],
            degradation: DegradationSpec {
                cutoff_hz: 2000.0,
                snr_db: Some(5.0),
                noise_kind: NoiseKind::Pink,
                rng_seed: 9,
            },
        }
    }

    #[test]
    fn manifest_round_trips_and_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let entries = vec![entry("a"), entry("b")];
        write_manifest(&p, &entries).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), entries);
        write_manifest(&p, &[entry("a"), entry("a")]).unwrap();
        assert!(read_manifest(&p).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let mut v = serde_json::to_value(entry("a")).unwrap();
        v["extra"] = 1.into();
        fs::write(&p, format!("{v}\n")).unwrap();
        assert!(read_manifest(&p).is_err());
    }
}
