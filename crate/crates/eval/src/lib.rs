//! Objective metrics for restored speech: log-spectral distance, word error
//! rate over a content proxy, speaker similarity from a hand-crafted
//! embedding, and corpus-level reports.

pub mod content;
pub mod error;
pub mod metrics;
pub mod report;
pub mod speaker;

pub use content::{band_features, content_error_rate, TemplateBank};
pub use error::{EvalError, Result};
pub use metrics::{edit_distance, lsd, lsd_highband, wer, SpectralParams, LSD_EPS};
pub use report::{
    evaluate_corpus, evaluate_with, Condition, ConditionReport, EvalConfig, EvalItem, Failure, Means, MetricsReport,
    UtteranceMetrics, WER_SOURCE,
};
pub use speaker::{proxy_speaker_embedding, raw_speaker_features, speaker_sim, SpeakerNormalizer};
