use std::path::PathBuf;

use dln_core::DlnError;
use thiserror::Error;

/// Failure of a CLI command, grouped into classes with distinct exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Core(#[from] DlnError),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Exit code classes.
pub mod exit {
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const PARSE: i32 = 4;
    pub const DIVERGED: i32 = 5;
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn class(&self) -> &'static str {
        match self.exit_code() {
            exit::USAGE => match self {
                CliError::Usage(_) => "usage",
                _ => "config",
            },
            exit::IO => "io",
            exit::PARSE => "parse",
            exit::DIVERGED => "divergence",
            _ => "error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => exit::USAGE,
            CliError::Io { .. } => exit::IO,
            CliError::Failed(_) => exit::OTHER,
            CliError::Core(e) => match e {
                DlnError::Io(_) => exit::IO,
                DlnError::Csv(_)
                | DlnError::Json(_)
                | DlnError::Arity { .. }
                | DlnError::MissingColumn(_)
                | DlnError::Version { .. }
                | DlnError::Checksum
                | DlnError::Malformed(_)
                | DlnError::Schema(_) => exit::PARSE,
                DlnError::Config(_)
                | DlnError::FoldCount(_)
                | DlnError::InvalidSplit(_)
                | DlnError::NegativeCost(_)
                | DlnError::UnknownCostKey(_) => exit::USAGE,
                DlnError::Diverged { .. } => exit::DIVERGED,
                _ => exit::OTHER,
            },
        }
    }

    /// One-line diagnostic.
    pub fn diagnostic(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("dln: {} error: {}", self.class(), msg.trim())
    }
}
