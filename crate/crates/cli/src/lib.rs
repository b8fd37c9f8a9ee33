//! Library side of the `ath` command: configuration handling and the
//! subcommand implementations.

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, CliResult, Kind};

/// Sizes the global thread pool from `ATH_THREADS` (unset or 0: one thread
/// per core).
pub fn init_threads() -> CliResult<()> {
    let n = match std::env::var("ATH_THREADS") {
        Ok(v) if !v.trim().is_empty() => v.trim().parse::<usize>().map_err(|_| {
            CliError::usage(format!(
                "ATH_THREADS must be a non-negative integer, got '{v}'"
            ))
        })?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError {
            kind: Kind::Internal,
            message: format!("thread pool: {e}"),
        })
}
