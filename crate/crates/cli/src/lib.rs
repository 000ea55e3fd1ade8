//! Configuration, orchestration and file output for the monopole-chain
//! pipeline.

pub mod config;
pub mod export;
pub mod pipeline;

pub use config::{Format, RunConfig, Stage};
pub use pipeline::{run, Check, DiagnosticsReport, ErrorRecord, RunOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] monochain::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
