//! The `xfolio` pipeline: ingest, train, trade, explain, report.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use commands::{cmd_explain, cmd_ingest, cmd_report, cmd_trade, cmd_train, ExplainFlags, OutputLock};
pub use config::{RunConfig, Stage};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("consistency error: {0}")]
    Consistency(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Training(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::Consistency(_) => 5,
        }
    }
}
