use std::fmt;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or scene files.
    Usage(String),
    /// Missing or malformed input, or outputs that could not be written.
    Data(anyhow::Error),
    /// Inputs were readable but the computation had no answer.
    Numerical(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        CliError::Data(e.into())
    }

    pub fn numerical(e: impl Into<anyhow::Error>) -> Self {
        CliError::Numerical(e.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            // `{:#}` prints the whole context chain on one line.
            CliError::Data(e) => write!(f, "data error: {e:#}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}
