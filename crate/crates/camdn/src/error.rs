use std::path::PathBuf;

/// Errors of the file layer and the command line. Each maps to an exit code:
/// 1 when a simulation invariant broke, 2 for bad input or IO.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}:{line}:{column}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, msg: String },

    #[error("{}: {source}", path.display())]
    Invalid { path: PathBuf, source: camdn_core::Error },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Sim(#[from] camdn_core::Error),

    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Sim(e) if e.is_invariant() => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
