//! Configuration, runs, sweeps and verification reports behind the CLI.

pub mod config;
pub mod run;
pub mod sweep;
pub mod verify;

use std::fmt;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use run::{refit, simulate, FitRecord, RunRecord};
pub use sweep::{sweep, SweepGrid, SweepOutcome};
pub use verify::{run_verify, VerifyKind, VerifyReport};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug)]
pub enum HarnessError {
    Config(ConfigError),
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => EXIT_CONFIG,
            HarnessError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(e) => e.fmt(f),
            HarnessError::Runtime(e) => write!(f, "runtime failure: {e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        HarnessError::Config(e)
    }
}

impl From<crate::Error> for HarnessError {
    fn from(e: crate::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}
