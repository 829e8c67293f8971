//! The bracketed semantic record: `[Key]: value; [Key]: value; ...`.
//!
//! Five keys are required (Gender, Emotion, Noise, Content, Quality) and are
//! matched case-insensitively. Any other key is kept verbatim in a spillover
//! map. Content is a whitespace-separated word list; Quality is a
//! comma-separated descriptor list. Canonical text lists the required fields
//! in that order, then spillover keys sorted by name, joined with `"; "` and
//! without a trailing period.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, RecordError};

/// Value standing for an intentionally empty list.
pub const EMPTY_MARKER: &str = "<empty>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Male, Gender::Female, Gender::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }

    fn display_name(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
            Gender::Unknown => "Unknown",
        }
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" => Ok(Gender::Male),
            "female" => Ok(Gender::Female),
            "unknown" => Ok(Gender::Unknown),
            other => Err(other.to_string()),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    Gender,
    Emotion,
    Noise,
    Content,
    Quality,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::Gender, Field::Emotion, Field::Noise, Field::Content, Field::Quality];

    pub fn name(self) -> &'static str {
        match self {
            Field::Gender => "Gender",
            Field::Emotion => "Emotion",
            Field::Noise => "Noise",
            Field::Content => "Content",
            Field::Quality => "Quality",
        }
    }

    fn lookup(key: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(key))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoTRecord {
    pub gender: Gender,
    pub emotion: String,
    pub noise: String,
    pub content: Vec<String>,
    pub quality: Vec<String>,
    /// Unrecognised keys with their values, keys kept as written.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn has_reserved(s: &str) -> bool {
    s.contains([';', '[', ']'])
}

impl CoTRecord {
    pub fn new(
        gender: Gender,
        emotion: impl Into<String>,
        noise: impl Into<String>,
        content: Vec<String>,
        quality: Vec<String>,
    ) -> Self {
        Self {
            gender,
            emotion: emotion.into(),
            noise: noise.into(),
            content,
            quality,
            extra: BTreeMap::new(),
        }
    }

    /// Checks that every field survives a serialize/parse round trip.
    pub fn validate(&self) -> Result<(), RecordError> {
        let bad = |field: &str, value: &str, why: &str| {
            Err(RecordError {
                field: field.to_string(),
                value: value.to_string(),
                reason: why.to_string(),
            })
        };
        for (field, v) in [("Emotion", &self.emotion), ("Noise", &self.noise)] {
            if v.is_empty() || has_reserved(v) || *v != collapse_ws(v) {
                return bad(field, v, "must be non-empty, trimmed, single-spaced, without ; [ ]");
            }
        }
        for w in &self.content {
            if w.is_empty() || has_reserved(w) || w.contains(char::is_whitespace) || w == EMPTY_MARKER {
                return bad("Content", w, "words must be non-empty, without whitespace or ; [ ]");
            }
        }
        for q in &self.quality {
            if q.is_empty() || has_reserved(q) || q.contains(',') || *q != collapse_ws(q) || q == EMPTY_MARKER {
                return bad("Quality", q, "descriptors must be non-empty, trimmed, without , ; [ ]");
            }
        }
        for (k, v) in &self.extra {
            if k.is_empty() || Field::lookup(k).is_some() || has_reserved(k) || *k != collapse_ws(k) {
                return bad("extra key", k, "must be a trimmed, non-reserved key name");
            }
            if has_reserved(v) || *v != collapse_ws(v) {
                return bad(k, v, "must be trimmed and single-spaced, without ; [ ]");
            }
        }
        // A final period would be read back as the optional terminator.
        let text = serialize_cot(self);
        if text.ends_with('.') {
            return bad("record", &text, "canonical text may not end in a period");
        }
        Ok(())
    }
}

/// Canonical text for a record. The record should satisfy
/// [`CoTRecord::validate`] for the text to parse back to it.
pub fn serialize_cot(r: &CoTRecord) -> String {
    let list = |items: &[String], sep: &str| {
        if items.is_empty() {
            EMPTY_MARKER.to_string()
        } else {
            items.join(sep)
        }
    };
    let mut parts = vec![
        format!("[Gender]: {}", r.gender),
        format!("[Emotion]: {}", r.emotion),
        format!("[Noise]: {}", r.noise),
        format!("[Content]: {}", list(&r.content, " ")),
        format!("[Quality]: {}", list(&r.quality, ", ")),
    ];
    parts.extend(r.extra.iter().map(|(k, v)| format!("[{k}]: {v}")));
    parts.join("; ")
}

impl fmt::Display for CoTRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_cot(self))
    }
}

impl FromStr for CoTRecord {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_cot(s)
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(p) if p == c => {
                self.pos += c.len_utf8();
                Ok(())
            }
            found => Err(ParseError::Syntax {
                offset: self.pos,
                message: match found {
                    Some(f) => format!("expected '{c}', found '{f}'"),
                    None => format!("expected '{c}', found end of input"),
                },
            }),
        }
    }

    /// Text up to (not including) the first of `stops`, or to the end.
    fn take_until(&mut self, stops: &[char]) -> (usize, &'a str) {
        let start = self.pos;
        let rest = &self.text[start..];
        let len = rest.find(stops).unwrap_or(rest.len());
        self.pos += len;
        (start, &rest[..len])
    }
}

/// Parses bracketed-key text into a record.
pub fn parse_cot(text: &str) -> Result<CoTRecord, ParseError> {
    let body = text.trim_end();
    let body = body.strip_suffix('.').unwrap_or(body);
    if body.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut cur = Cursor { text: body, pos: 0 };
    let mut found: BTreeMap<Field, (usize, String)> = BTreeMap::new();
    let mut extra = BTreeMap::new();
    loop {
        cur.expect('[')?;
        let (key_at, key) = cur.take_until(&[']', '[', ';']);
        cur.expect(']')?;
        let key = collapse_ws(key);
        if key.is_empty() {
            return Err(ParseError::Syntax {
                offset: key_at,
                message: "empty key".into(),
            });
        }
        cur.expect(':')?;
        let (value_at, value) = cur.take_until(&[';', '[', ']']);
        if let Some(c) = cur.peek().filter(|c| *c != ';') {
            return Err(ParseError::Syntax {
                offset: cur.pos,
                message: format!("unexpected '{c}' inside a value; fields are separated by ';'"),
            });
        }
        let value = collapse_ws(value);
        match Field::lookup(&key) {
            Some(f) => {
                if found.insert(f, (value_at, value)).is_some() {
                    return Err(ParseError::DuplicateKey(f.name().to_string()));
                }
            }
            None => {
                if extra.contains_key(&key) {
                    return Err(ParseError::DuplicateKey(key));
                }
                extra.insert(key, value);
            }
        }
        cur.skip_ws();
        if cur.peek().is_none() {
            break;
        }
        cur.expect(';')?;
        cur.skip_ws();
        if cur.peek().is_none() {
            break;
        }
    }

    let missing: Vec<&'static str> = Field::ALL
        .into_iter()
        .filter(|f| !found.contains_key(f))
        .map(Field::name)
        .collect();
    if !missing.is_empty() {
        return Err(ParseError::MissingKeys(missing));
    }
    let mut take = |f: Field| found.remove(&f).expect("checked above");

    let (at, g) = take(Field::Gender);
    let gender = g.parse::<Gender>().map_err(|v| ParseError::InvalidValue {
        field: "Gender",
        offset: at,
        value: v,
    })?;
    let mut scalar = |f: Field| {
        let (at, v) = take(f);
        if v.is_empty() {
            Err(ParseError::InvalidValue {
                field: f.name(),
                offset: at,
                value: v,
            })
        } else {
            Ok(v)
        }
    };
    let emotion = scalar(Field::Emotion)?;
    let noise = scalar(Field::Noise)?;
    let (at, c) = take(Field::Content);
    let content = match c.as_str() {
        EMPTY_MARKER => Vec::new(),
        "" => {
            return Err(ParseError::InvalidValue {
                field: "Content",
                offset: at,
                value: c,
            })
        }
        _ => c.split_whitespace().map(str::to_string).collect(),
    };
    let (_, q) = take(Field::Quality);
    let quality = if q == EMPTY_MARKER {
        Vec::new()
    } else {
        q.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
    };
    Ok(CoTRecord {
        gender,
        emotion,
        noise,
        content,
        quality,
        extra,
    })
}

/// Canonical form of any parseable text.
pub fn normalize_cot(text: &str) -> Result<String, ParseError> {
    parse_cot(text).map(|r| serialize_cot(&r))
}
