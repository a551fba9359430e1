//! Command-line driver: configuration, subcommands and output files.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

pub use config::RunConfig;

/// Failure of a subcommand, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration, or a failed check.
    Config(String),
    /// The solver or the output layer failed.
    Solver(dns_lab_core::Error),
    /// The step size fell below its floor: suspected finite-time blow-up.
    MaximalTime { t: f64, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
            CliError::MaximalTime { .. } => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Solver(e) => write!(f, "solver error: {e}"),
            CliError::MaximalTime { message, .. } => write!(f, "{message}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dns_lab_core::Error> for CliError {
    fn from(e: dns_lab_core::Error) -> Self {
        match e {
            dns_lab_core::Error::MaximalTime { t, .. } => CliError::MaximalTime { t, message: e.to_string() },
            other => CliError::Solver(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Solver(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => io.into(),
            other => CliError::Solver(dns_lab_core::Error::InvalidConfig(format!("csv: {other:?}"))),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Solver(dns_lab_core::Error::InvalidConfig(format!("json: {e}")))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
