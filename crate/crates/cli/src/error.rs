//! Exit-code mapping and the one-line JSON diagnostics written to stderr.

use std::fmt;
use std::path::Path;

use serde_json::{json, Value};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Validation { message: String, path: Option<String>, line: Option<usize>, column: Option<usize> },
    NonConvergence { message: String, lambda: Option<f64>, y: Option<f64> },
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation { message: message.into(), path: None, line: None, column: None }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Validation {
            message: err.to_string(),
            path: Some(path.display().to_string()),
            line: None,
            column: None,
        }
    }

    pub fn json(path: &Path, err: serde_json::Error) -> Self {
        CliError::Validation {
            message: err.to_string(),
            path: Some(path.display().to_string()),
            line: Some(err.line()),
            column: Some(err.column()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => EXIT_VALIDATION,
            CliError::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        }
    }

    /// Single-line JSON record for the diagnostic stream.
    pub fn to_json(&self) -> Value {
        match self {
            CliError::Validation { message, path, line, column } => json!({
                "error": "validation",
                "message": message,
                "path": path,
                "line": line,
                "column": column,
            }),
            CliError::NonConvergence { message, lambda, y } => json!({
                "error": "non_convergence",
                "message": message,
                "lambda": lambda,
                "y": y,
            }),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl From<freeconv_core::Error> for CliError {
    fn from(err: freeconv_core::Error) -> Self {
        use freeconv_core::Error as E;
        let message = err.to_string();
        match err {
            E::NonConvergence { best } => {
                CliError::NonConvergence { message, lambda: Some(best.z.re), y: Some(best.z.im) }
            }
            E::ScalarNonConvergence { z, .. } => {
                CliError::NonConvergence { message, lambda: Some(z.re), y: Some(z.im) }
            }
            E::Domain(_) | E::InvalidMeasure(_) => CliError::validation(message),
        }
    }
}

impl From<freeconv_lab::Error> for CliError {
    fn from(err: freeconv_lab::Error) -> Self {
        match err {
            freeconv_lab::Error::Core(inner) => inner.into(),
            freeconv_lab::Error::Domain(m) => CliError::validation(m),
            e @ freeconv_lab::Error::Eigen(_) => {
                CliError::NonConvergence { message: e.to_string(), lambda: None, y: None }
            }
        }
    }
}
