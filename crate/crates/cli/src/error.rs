use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fillin_core::Error),
    #[error("io error: {0}")]
    Io(String),
    #[error("invariant violations: {}", .0.join(", "))]
    Invariant(Vec<String>),
}

impl CliError {
    /// Process exit code: 3 for configuration problems, 2 for everything that
    /// went wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(_) => "core",
            CliError::Io(_) => "io",
            CliError::Invariant(_) => "invariant",
        }
    }

    /// Names of the failed checks, or the error message.
    pub fn failures(&self) -> Vec<String> {
        match self {
            CliError::Invariant(names) => names.clone(),
            other => vec![other.to_string()],
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Wraps core errors raised while turning config values into objects.
pub(crate) fn config_err(e: fillin_core::Error) -> CliError {
    CliError::Config(e.to_string())
}
