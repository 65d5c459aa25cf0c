//! Scenario runner behind the `kato` binary.

pub mod emit;
pub mod runner;
pub mod scenario;

pub use runner::{run, RunOptions, RunReport};
pub use scenario::{load_scenario, parse_scenario};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] kato_core::KatoError),
}

/// Process exit codes.
pub mod exit {
    /// Verdicts match the declared classification (or none was declared).
    pub const OK: i32 = 0;
    /// A definite classification was declared but the run is inconclusive.
    pub const INCONCLUSIVE: i32 = 2;
    pub const MISMATCH: i32 = 3;
    /// Bad arguments or scenario file.
    pub const CONFIG: i32 = 4;
    /// Numerical failure or resource cap; a partial report is still written.
    pub const RUNTIME: i32 = 5;
}
