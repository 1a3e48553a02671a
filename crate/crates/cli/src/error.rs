use std::fmt;

/// A failure plus the exit code it maps to: 2 for usage or configuration
/// mistakes, 1 for everything that went wrong while running.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage<T>(msg: impl fmt::Display) -> CliResult<T> {
    Err(CliError::Usage(anyhow::anyhow!("{msg}")))
}

/// Marks an error as a usage error.
pub trait UsageContext<T> {
    fn or_usage(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> UsageContext<T> for Result<T, E> {
    fn or_usage(self) -> CliResult<T> {
        self.map_err(|e| CliError::Usage(e.into()))
    }
}
