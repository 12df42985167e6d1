use std::fmt;

use rfbsde_core::Error;

/// Process exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERIFY_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// A failure rendered as one greppable line: `error[E-CODE]: message`.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub exit: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: "E-CONFIG",
            exit: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        Self {
            code: "E-IO",
            exit: EXIT_NUMERIC,
            message: format!("{context}: {err}"),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat = self.message.replace('\n', " ");
        write!(f, "error[{}]: {}", self.code, flat)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, exit) = match &e {
            Error::InvalidInput(_) => ("E-CONFIG", EXIT_CONFIG),
            Error::ControlOutsideSet { .. } => ("E-CONTROL", EXIT_CONFIG),
            Error::StabilityViolation { .. } => ("E-CFL", EXIT_CONFIG),
            Error::NotClassical { .. } => ("E-NOT-CLASSICAL", EXIT_CONFIG),
            Error::DepthTooLarge { .. } => ("E-DEPTH", EXIT_CONFIG),
            Error::Dimension(_) => ("E-DIMENSION", EXIT_CONFIG),
            Error::Parse(_) => ("E-PARSE", EXIT_CONFIG),
            Error::NonFinite { .. } => ("E-NONFINITE", EXIT_NUMERIC),
            Error::StateOverflow { .. } => ("E-OVERFLOW", EXIT_NUMERIC),
            Error::FixedPointNotConverged { .. } => ("E-PICARD", EXIT_NUMERIC),
            Error::PolicyIterationNotConverged { .. } => ("E-POLICY", EXIT_NUMERIC),
            Error::KinkColumn { .. } => ("E-KINK", EXIT_NUMERIC),
            Error::Io(_) => ("E-IO", EXIT_NUMERIC),
        };
        Self {
            code,
            exit,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
