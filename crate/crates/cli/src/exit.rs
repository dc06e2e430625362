//! Process exit codes and the error type that carries them.

use std::fmt;

use infoact::Error;

pub const SUCCESS: u8 = 0;
pub const RUNTIME: u8 = 1;
pub const CONFIG: u8 = 2;
pub const INGESTION: u8 = 3;
pub const VERIFICATION: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: CONFIG,
            error: error.into(),
        }
    }

    pub fn ingestion(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: INGESTION,
            error: error.into(),
        }
    }

    pub fn verification(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: VERIFICATION,
            error: error.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Errors from the library: malformed inputs are ingestion failures,
/// violated preconditions are configuration failures.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Ingestion { .. }
            | Error::Format(_)
            | Error::Alphabet(_)
            | Error::InvalidMdp(_)
            | Error::ZeroProbability { .. }
            | Error::IllegalAction { .. } => INGESTION,
            Error::Precondition(_) | Error::Budget(_) | Error::InvalidPolicy(_) => CONFIG,
            _ => RUNTIME,
        };
        Self { code, error: e.into() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: RUNTIME,
            error: e.into(),
        }
    }
}
