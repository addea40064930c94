use std::io;
use std::path::PathBuf;

use mbib_core::Error as CoreError;

/// Failures of the harness, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", .path.display())]
    Data { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Core { context: String, source: CoreError },
    #[error("{}: {source}", .path.display())]
    Json { path: PathBuf, source: serde_json::Error },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub const EXIT_CONFIG: i32 = 2;
    pub const EXIT_DATA: i32 = 3;
    pub const EXIT_NUMERICAL: i32 = 4;

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Data { path: path.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::Json { .. } => Self::EXIT_CONFIG,
            CliError::Io { .. } | CliError::Data { .. } => Self::EXIT_DATA,
            CliError::Core { source, .. } if source.is_numerical() => Self::EXIT_NUMERICAL,
            CliError::Core { source, .. } => match source {
                CoreError::InvalidConfig(_) | CoreError::UnknownPreset(_) | CoreError::UnknownNode(_) => {
                    Self::EXIT_CONFIG
                }
                _ => Self::EXIT_DATA,
            },
        }
    }
}

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for mbib_core::Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Core { context: context(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::data("a.csv", "bad").exit_code(), 3);
        let numerical = CliError::Core { context: "fit".into(), source: CoreError::NoConvergence(3) };
        assert_eq!(numerical.exit_code(), 4);
        let unknown = CliError::Core { context: "scope".into(), source: CoreError::UnknownNode("Q".into()) };
        assert_eq!(unknown.exit_code(), 2);
        let missing = CliError::Core { context: "predict".into(), source: CoreError::MissingColumn("A".into()) };
        assert_eq!(missing.exit_code(), 3);
    }
}
