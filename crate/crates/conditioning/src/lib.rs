//! Semantic records and acoustic priors as model conditioning.
//!
//! A record is a five-field bracketed description of an utterance (speaker
//! gender, emotion, background noise, spoken content, perceived quality). It
//! is embedded as a token sequence for cross-attention. Bandwidth and pitch
//! priors are embedded separately and enter both as extra tokens and as a
//! global vector added to the timestep embedding.

pub mod bundle;
pub mod cache;
pub mod error;
pub mod oracle;
pub mod priors;
pub mod record;
pub mod vocab;

pub use bundle::{
    assemble, assemble_conditioning, build_bundle, embed_pitch_stats, embed_semantic, Ablation, BundleVars,
    ConditioningBundle, ConditioningConfig, ConditioningInputs, SemanticEmbedding,
};
pub use cache::{CacheEntry, ConditioningCache, RecordSource};
pub use error::{ConditioningError, ParseError, RecordError, Result};
pub use oracle::{corrupt_record, oracle_record, OracleLabels};
pub use priors::{fourier_embed_bandwidth, pitch_features, FOURIER_K};
pub use record::{normalize_cot, parse_cot, serialize_cot, CoTRecord, Field, Gender, EMPTY_MARKER};
pub use vocab::{SemanticMode, Vocab};
