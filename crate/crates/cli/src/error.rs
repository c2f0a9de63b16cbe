use std::fmt;

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Solver(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<lrcc::Error> for CliError {
    fn from(e: lrcc::Error) -> Self {
        use lrcc::Error as E;
        let msg = e.to_string();
        match e {
            E::Io { .. } | E::BadMagic { .. } | E::TruncatedPayload { .. } | E::Parse { .. } => {
                CliError::Io(msg)
            }
            E::Dimension(_) | E::LengthMismatch { .. } | E::InvalidArgument(_) => CliError::Usage(msg),
            _ => CliError::Solver(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
