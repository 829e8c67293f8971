//! Experiment driver for the restoration model.
//!
//! Every command is a library function taking a parsed [`RunConfig`], so
//! the binary and the test suites run exactly the same code. Commands are
//! deterministic: the same configuration and seeds give byte-identical
//! artifacts, and every output directory carries a `run.json` with the
//! configuration and its fingerprint.

pub mod ablate;
pub mod artifact;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod gradcheck;
pub mod manifest;
pub mod restore;
pub mod train;

pub use ablate::{cmd_ablate, cmd_ablate_timed, verify_table, AblationRow, AblationTable, VariantTiming, VARIANTS};
pub use config::RunConfig;
pub use corpus::{cmd_synth_data, CorpusSummary};
pub use error::{exit_code, CliError};
pub use evaluate::{cmd_evaluate, evaluate_state};
pub use gradcheck::{cmd_gradcheck, GradcheckSummary};
pub use manifest::{load_split, read_manifest, ManifestEntry};
pub use restore::{cmd_restore, CotSource, RestoreRecord, RestoreRequest};
pub use train::{cmd_train, TrainOptions, TrainSummary};
