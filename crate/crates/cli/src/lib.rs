//! Command-line front end for `lcap-core`: single estimates, parameter
//! sweeps and contour export.

pub mod cli;
pub mod config;
pub mod output;
pub mod run;

use std::process::ExitCode;

/// Overrides the compiled-in code version in every output file.
pub const VERSION_ENV: &str = "LC_CODE_VERSION";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Too many failed samples, or a single trace that failed.
    #[error("{0}")]
    Simulation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Simulation(_) => ExitCode::from(3),
            CliError::Io(_) => ExitCode::from(1),
        }
    }
}

impl From<lcap_core::Error> for CliError {
    fn from(e: lcap_core::Error) -> Self {
        use lcap_core::Error as E;
        match e {
            E::FailureRate { .. } | E::NoClosure { .. } | E::GradientVanished { .. } | E::NoConvergence { .. } => {
                CliError::Simulation(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// `git describe` of the build, unless `LC_CODE_VERSION` is set.
pub fn code_version() -> String {
    std::env::var(VERSION_ENV).unwrap_or_else(|_| env!("LCAP_GIT_DESCRIBE").to_string())
}
