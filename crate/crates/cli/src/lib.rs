//! Experiment harness for the churn simulator: campaign configs, sweep
//! execution with CSV output, and transcript replay.

use std::fmt;

pub mod campaign;
pub mod config;
pub mod replay;

pub use campaign::{run_campaign, simulate_file, METRICS_HEADER, SUMMARY_HEADER};
pub use config::{parse_config, Campaign, Cell};
pub use replay::{replay_files, ReplayOutcome};

/// CLI-level failures, split by exit-code class: usage/parse problems exit
/// 2, run/replay failures exit 1.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad invocation or unreadable input file.
    Usage(String),
    /// Config text is malformed.
    Parse { line: usize, reason: String },
    /// A sweep cell violates a config invariant.
    Validation { cell: usize, reason: String },
    /// Engine or IO failure during execution.
    Run(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Parse { line, reason } => write!(f, "config parse error (line {line}): {reason}"),
            CliError::Validation { cell, reason } => {
                write!(f, "config validation error (cell {cell}): {reason}")
            }
            CliError::Run(msg) => write!(f, "run failed: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    /// Exit code class: 2 for usage/parse/validation, 1 for run failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } | CliError::Validation { .. } => 2,
            CliError::Run(_) | CliError::Io(_) => 1,
        }
    }
}
