use std::path::Path;

/// Command failure; the variant decides the exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad files, flags or data: exit code 2.
    #[error("{0}")]
    Input(String),
    /// A bug or an unexpected failure: exit code 1.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<cdcoref::Error> for CliError {
    fn from(err: cdcoref::Error) -> Self {
        if err.is_input() {
            CliError::Input(err.to_string())
        } else {
            CliError::Internal(err.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
