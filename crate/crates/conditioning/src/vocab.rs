//! Closed token vocabulary for semantic records.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::record::{CoTRecord, Field, Gender};

pub const UNK: &str = "<unk>";
/// Stand-in token used when semantic conditioning is disabled.
pub const NULL: &str = "<null>";

pub fn marker(field: Field) -> String {
    format!("[{}]", field.name().to_ascii_lowercase())
}

/// Which parts of a record reach the token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticMode {
    /// Every field with its marker.
    #[default]
    Full,
    /// Only the content marker and content words.
    TranscriptOnly,
    /// A single null token.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocab {
    id: String,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

impl From<VocabFile> for Vocab {
    fn from(f: VocabFile) -> Self {
        Vocab::from_tokens(f.tokens)
    }
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile { tokens: v.tokens }
    }
}

/// Lower-cased word tokens of a free-text value.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

impl Vocab {
    /// Reserved tokens (unknown, null, field markers, genders) followed by
    /// the lower-cased `words` in sorted order without duplicates.
    pub fn build<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tokens: Vec<String> = vec![UNK.into(), NULL.into()];
        tokens.extend(Field::ALL.into_iter().map(marker));
        tokens.extend(Gender::ALL.iter().map(|g| g.as_str().to_string()));
        let mut rest: Vec<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .filter(|w| !tokens.contains(w))
            .collect();
        rest.sort();
        rest.dedup();
        tokens.extend(rest);
        Self::from_tokens(tokens)
    }

    /// Vocabulary covering every word that appears in `records`.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a CoTRecord>) -> Self {
        let mut all = Vec::new();
        for r in records {
            all.extend(words(&r.emotion));
            all.extend(words(&r.noise));
            all.extend(r.content.iter().map(|w| w.to_lowercase()));
            for q in &r.quality {
                all.extend(words(q));
            }
        }
        Self::build(all)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let mut h = Sha256::new();
        for t in &tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        let digest = h.finalize();
        let id = format!(
            "vocab-{}-{}",
            tokens.len(),
            digest[..6].iter().map(|b| format!("{b:02x}")).collect::<String>()
        );
        Self { id, tokens, index }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn unk_id(&self) -> usize {
        0
    }

    pub fn null_id(&self) -> usize {
        1
    }

    /// Id of a token, case-insensitively; unknown words map to `<unk>`.
    pub fn lookup(&self, token: &str) -> usize {
        self.index
            .get(token)
            .or_else(|| self.index.get(&token.to_lowercase()))
            .copied()
            .unwrap_or(0)
    }

    pub fn marker_id(&self, field: Field) -> usize {
        self.lookup(&marker(field))
    }

    /// Token ids for a record; never empty.
    pub fn encode(&self, r: &CoTRecord, mode: SemanticMode) -> Vec<usize> {
        let mut ids = Vec::new();
        let push_words = |ids: &mut Vec<usize>, text: &str| ids.extend(words(text).map(|w| self.lookup(&w)));
        match mode {
            SemanticMode::Disabled => ids.push(self.null_id()),
            SemanticMode::TranscriptOnly => {
                ids.push(self.marker_id(Field::Content));
                ids.extend(r.content.iter().map(|w| self.lookup(w)));
            }
            SemanticMode::Full => {
                ids.push(self.marker_id(Field::Gender));
                ids.push(self.lookup(r.gender.as_str()));
                ids.push(self.marker_id(Field::Emotion));
                push_words(&mut ids, &r.emotion);
                ids.push(self.marker_id(Field::Noise));
                push_words(&mut ids, &r.noise);
                ids.push(self.marker_id(Field::Content));
                ids.extend(r.content.iter().map(|w| self.lookup(w)));
                ids.push(self.marker_id(Field::Quality));
                for q in &r.quality {
                    push_words(&mut ids, q);
                }
            }
        }
        ids
    }

    /// Normalized time of each token in [`Vocab::encode`] order: content word
    /// `i` of `n` sits at its slot centre `(i + 0.5) / n`, assuming slots of
    /// equal duration; every other token has no position.
    pub fn token_positions(&self, r: &CoTRecord, mode: SemanticMode) -> Vec<Option<f64>> {
        let n = r.content.len() as f64;
        let content = (0..r.content.len()).map(|i| Some((i as f64 + 0.5) / n));
        let mut out = Vec::new();
        match mode {
            SemanticMode::Disabled => out.push(None),
            SemanticMode::TranscriptOnly => {
                out.push(None);
                out.extend(content);
            }
            SemanticMode::Full => {
                out.push(None);
                out.push(None);
                out.push(None);
                out.extend(words(&r.emotion).map(|_| None));
                out.push(None);
                out.extend(words(&r.noise).map(|_| None));
                out.push(None);
                out.extend(content);
                out.push(None);
                for q in &r.quality {
                    out.extend(words(q).map(|_| None));
                }
            }
        }
        out
    }
}
