//! CLI error type carrying the process exit code.
//!
//! Exit codes: 0 success, 2 argument/validation error, 3 numerical failure,
//! 4 I/O error.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, malformed input files, schema mismatches.
    Usage(String),
    /// Numerical failures: non-convergence under --strict, collapsed
    /// mixtures, ceiling violations.
    Numeric(String),
    /// Filesystem and serialization-output failures.
    Io(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Numeric(msg) | CliError::Io(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

impl From<nhpp::Error> for CliError {
    fn from(err: nhpp::Error) -> Self {
        match err {
            nhpp::Error::ComponentCollapse { .. }
            | nhpp::Error::AllRestartsFailed { .. }
            | nhpp::Error::CeilingViolation { .. }
            | nhpp::Error::ZeroRateAtEvent { .. } => CliError::Numeric(err.to_string()),
            _ => CliError::Usage(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        if err.is_io_error() {
            CliError::Io(err.to_string())
        } else {
            CliError::Usage(err.to_string())
        }
    }
}
