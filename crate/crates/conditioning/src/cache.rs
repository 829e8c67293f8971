//! Per-utterance record store persisted as JSON lines.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConditioningError, Result};
use crate::record::{CoTRecord, Gender};

/// Where a cached record came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecordSource {
    Oracle,
    /// Oracle output with content tokens substituted at this probability.
    Corrupted(f64),
}

impl fmt::Display for RecordSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordSource::Oracle => f.write_str("oracle"),
            RecordSource::Corrupted(p) => write!(f, "corrupted({p})"),
        }
    }
}

impl FromStr for RecordSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "oracle" {
            return Ok(RecordSource::Oracle);
        }
        s.strip_prefix("corrupted(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|p| p.parse::<f64>().ok())
            .map(RecordSource::Corrupted)
            .ok_or_else(|| format!("unknown record source {s:?}"))
    }
}

impl Serialize for RecordSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RecordSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub record: CoTRecord,
    pub source: RecordSource,
}

/// One line of the store; field order is fixed for diffable files.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: String,
    gender: Gender,
    emotion: String,
    noise: String,
    content: Vec<String>,
    quality: Vec<String>,
    source: RecordSource,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    extra: BTreeMap<String, String>,
}

impl Line {
    fn new(id: &str, e: &CacheEntry) -> Self {
        let r = &e.record;
        Line {
            id: id.to_string(),
            gender: r.gender,
            emotion: r.emotion.clone(),
            noise: r.noise.clone(),
            content: r.content.clone(),
            quality: r.quality.clone(),
            source: e.source,
            extra: r.extra.clone(),
        }
    }

    fn into_entry(self) -> (String, CacheEntry) {
        let record = CoTRecord {
            gender: self.gender,
            emotion: self.emotion,
            noise: self.noise,
            content: self.content,
            quality: self.quality,
            extra: self.extra,
        };
        (
            self.id,
            CacheEntry {
                record,
                source: self.source,
            },
        )
    }
}

/// Map from utterance id to record. When file-backed, every `put` is
/// appended to the store and later lines win on reload.
#[derive(Debug, Clone, Default)]
pub struct ConditioningCache {
    path: Option<PathBuf>,
    entries: BTreeMap<String, CacheEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ConditioningError + '_ {
    move |source| ConditioningError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl ConditioningCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) the store at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = BTreeMap::new();
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let l: Line = serde_json::from_str(line).map_err(|e| ConditioningError::CacheFormat {
                    path: path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                let (id, e) = l.into_entry();
                entries.insert(id, e);
            }
        }
        Ok(Self {
            path: Some(path),
            entries,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn put(&mut self, id: &str, record: CoTRecord, source: RecordSource) -> Result<()> {
        if id.is_empty() {
            return Err(ConditioningError::EmptyId);
        }
        let entry = CacheEntry { record, source };
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&Line::new(id, &entry)).expect("cache lines always serialize");
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io_err(path))?;
            writeln!(f, "{line}").map_err(io_err(path))?;
        }
        self.entries.insert(id.to_string(), entry);
        Ok(())
    }

    /// `None` when the id has never been stored.
    pub fn get(&self, id: &str) -> Option<&CoTRecord> {
        self.entries.get(id).map(|e| &e.record)
    }

    pub fn entry(&self, id: &str) -> Option<&CacheEntry> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CacheEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Rewrites the store with one line per id, sorted by id.
    pub fn compact(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let f = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(f);
        for (id, e) in &self.entries {
            let line = serde_json::to_string(&Line::new(id, e)).expect("cache lines always serialize");
            writeln!(w, "{line}").map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))
    }
}
