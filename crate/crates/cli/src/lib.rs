//! Command-line front end: configuration, sweeps, CSV output and
//! regression baselines on top of the `msqkd` core crate.

pub mod args;
pub mod commands;
pub mod config;
pub mod format;

use std::path::Path;

/// Exit statuses of the `msqkd` binary.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CHECK_FAILED: u8 = 1;
    pub const STATS: u8 = 2;
    pub const VALIDATION: u8 = 3;
    pub const DRIFT: u8 = 4;
    pub const ABORTED: u8 = 5;
    pub const USAGE: u8 = 64;
    pub const IO: u8 = 74;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] msqkd::Error),
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("sampled rounds carried inconsistent messages; protocol aborted")]
    Aborted,
    #[error("baseline drift:\n  {}", .0.join("\n  "))]
    Drift(Vec<String>),
    #[error("{failures} of {cases} equivalence checks failed")]
    CheckFailed { failures: usize, cases: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use msqkd::Error as E;
        match self {
            CliError::Core(E::InfeasibleStats { .. } | E::MissingCells(_) | E::EmptyKeyTable) => {
                exit::STATS
            }
            CliError::Core(_) | CliError::Invalid(_) => exit::VALIDATION,
            CliError::File { .. } | CliError::Io(_) => exit::IO,
            CliError::Aborted => exit::ABORTED,
            CliError::Drift(_) => exit::DRIFT,
            CliError::CheckFailed { .. } => exit::CHECK_FAILED,
        }
    }

    pub(crate) fn file(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::File {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
