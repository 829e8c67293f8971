//! Error classes and their process exit codes.

use thiserror::Error;

/// Failures the user can fix by changing the command line or configuration.
/// Everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// `1` when the chain holds a [`CliError`], `2` otherwise.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    if e.chain().any(|c| c.downcast_ref::<CliError>().is_some()) {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}
