//! Failure classes that map onto process exit codes.

use std::fmt;
use std::path::PathBuf;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING_ARTIFACT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    MissingArtifact { path: PathBuf, stage: &'static str },
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::MissingArtifact { path, stage } => {
                write!(f, "missing artifact {}; run the `{stage}` stage first", path.display())
            }
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Exit code for an error chain: the first classified cause wins.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<CliError>() {
            return match c {
                CliError::Config(_) => EXIT_CONFIG,
                CliError::MissingArtifact { .. } => EXIT_MISSING_ARTIFACT,
                CliError::Numerical(_) => EXIT_NUMERICAL,
            };
        }
        if let Some(e) = cause.downcast_ref::<relgrid::Error>() {
            return match e {
                relgrid::Error::Numerical(_) | relgrid::Error::Infeasible(_) => EXIT_NUMERICAL,
                relgrid::Error::InvalidInput(_) | relgrid::Error::Toml(_) => EXIT_CONFIG,
                _ => EXIT_OTHER,
            };
        }
    }
    EXIT_OTHER
}
