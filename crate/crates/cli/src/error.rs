use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Solver(#[from] blowfly::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("acceptance gate failed: {0}")]
    Gate(String),

    #[error("diagnostic run blew up: {0}")]
    DiagnosticBlowUp(blowfly::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use blowfly::Error as E;
        match self {
            Self::Config(_) => 2,
            Self::Solver(
                E::InvalidParameter { .. }
                | E::NoPositiveEquilibrium { .. }
                | E::FarFieldMismatch(_)
                | E::DomainTooSmall { .. }
                | E::GridMismatch(_),
            ) => 2,
            Self::Solver(_) => 3,
            Self::Gate(_) => 4,
            Self::DiagnosticBlowUp(_) => 5,
            Self::Io { .. } => 1,
        }
    }
}
