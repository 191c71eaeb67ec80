//! Sweep orchestration, CSV output and the validation suite behind the
//! `dopcap` binary.

pub mod channels;
pub mod config;
pub mod sweep;
pub mod validate;

pub use config::{BoundName, Config, QPolicy, SnrConvention};
pub use sweep::{run_sweep, write_csv, write_metadata, ResultRow, SweepOptions, CSV_HEADER};
pub use validate::{validate, Check, ValidateOptions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dopcap_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit code: 1 for configuration and input problems.
    pub fn exit_code(&self) -> i32 {
        1
    }
}
