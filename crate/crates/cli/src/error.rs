use std::fmt;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or inputs the user can fix: exit code 2.
    Usage(String),
    /// Anything that failed while running: exit code 1.
    Runtime(rede::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<rede::Error> for CliError {
    fn from(e: rede::Error) -> Self {
        match e {
            rede::Error::Argument(m) => CliError::Usage(m),
            other => CliError::Runtime(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
