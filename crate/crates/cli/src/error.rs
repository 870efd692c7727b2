use std::path::Path;

use benchirt::indicators::IndicatorError;
use benchirt::{DataError, IrtError, NormalizeError, SynthError};
use thiserror::Error;

/// Process exit codes. Part of the command-line contract.
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Input(m) => CliError::Input(format!("{p}: {m}")),
            CliError::NotConverged(m) => CliError::NotConverged(format!("{p}: {m}")),
            CliError::Mismatch(m) => CliError::Mismatch(format!("{p}: {m}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn unknown_items(ids: &[String]) -> CliError {
    CliError::Mismatch(format!("item ids not in the model: {}", ids.join(", ")))
}

impl From<IrtError> for CliError {
    fn from(e: IrtError) -> Self {
        match e {
            IrtError::UnknownItems(ids) => unknown_items(&ids),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<IndicatorError> for CliError {
    fn from(e: IndicatorError) -> Self {
        match e {
            IndicatorError::MismatchedItems(ids) => {
                CliError::Mismatch(format!("item sets differ: {}", ids.join(", ")))
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_error!(
    DataError,
    NormalizeError,
    SynthError,
    std::io::Error,
    serde_json::Error,
    csv::Error
);
