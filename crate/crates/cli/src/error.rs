use std::path::PathBuf;

use koopman_pe_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Bad config or input file. The message carries a line number when the
    /// problem can be located.
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Input { path: path.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 1 for IO, 2 for configuration, 3 for numerical failure, 4 when a
    /// design runs out of iterations.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Input { .. } => 2,
            CliError::Core(e) => match e {
                CoreError::BudgetExhausted(_) => 4,
                CoreError::InvalidParameter(_)
                | CoreError::Dimension { .. }
                | CoreError::Size { .. }
                | CoreError::Mask(_) => 2,
                _ => 3,
            },
        }
    }
}
