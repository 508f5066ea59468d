use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its allowed domain.
    #[error("invalid value for `{field}`: {constraint} (got {value})")]
    Validation {
        field: String,
        constraint: String,
        value: String,
    },

    /// The call itself is inconsistent (e.g. pairing two photons from the same pulse).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The data cannot support the requested estimate (empty normalization
    /// region, no satellite counts, too few fringe settings...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("unknown channel {0} (expected 1..=4)")]
    UnknownChannel(u8),

    #[error("simulation aborted after {completed_cycles} cycles: {reason}")]
    Resource { completed_cycles: u64, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn validation(field: impl Into<String>, constraint: impl Into<String>, value: impl ToString) -> Self {
        Error::Validation {
            field: field.into(),
            constraint: constraint.into(),
            value: value.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Checks `lo <= value <= hi` (also rejects NaN).
pub(crate) fn check_range(field: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must lie in [{lo}, {hi}]"), value))
    }
}
