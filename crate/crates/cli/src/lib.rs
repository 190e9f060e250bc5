//! Catalog runs and report emission for the `vmono` command.

pub mod output;
pub mod suite;

pub use output::Format;
pub use suite::{run, Bundle, ReportRow, RunSpec, TheoremId};

/// Exit status: 0 for success (including failed hypotheses), 1 when some
/// inequality is violated under its hypotheses, 2 for usage and I/O errors.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Geometry(#[from] vmono::GeomError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// Environment variable read for the worker thread count.
pub const THREADS_ENV: &str = "VMONO_THREADS";
