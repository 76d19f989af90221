//! Command implementations behind the `stconv` executable.
//!
//! Every command takes a resolved [`RunConfig`]; commands that read clips take them
//! through a [`ClipSource`](stconv_core::dataio::ClipSource) so callers can substitute
//! in-memory or instrumented datasets.

pub mod bench;
pub mod config;
mod eval;
mod features;
mod stip;
mod synth;
mod train;

use std::fmt;

pub use bench::{run_bench, BenchReport, BenchRow};
pub use config::{BenchSize, RunConfig, Side};
pub use eval::{run_eval, EvalOutcome};
pub use features::{extract_points, CodebookFile};
pub use stip::run_stip;
pub use synth::{run_synth, SynthOutcome};
pub use train::{run_train, LogLine, TrainOutcome};

/// Bad flags, unknown config keys and similar caller mistakes (exit code 2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Process exit code for a failed command: 2 usage, 3 data or format, 4 numeric failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use stconv_core::Error;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NonFinite { .. } => EXIT_NUMERIC,
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

/// Environment variable capping the worker pool used for per-clip work.
pub const THREADS_ENV: &str = "STCONV_THREADS";

/// Size the global worker pool from `STCONV_THREADS` (default: available cores).
pub fn configure_threads() -> Result<usize, UsageError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| UsageError(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, usize::from),
    };
    // a second call (e.g. from tests) finds the pool already built; that is fine
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(rayon::current_num_threads())
}
