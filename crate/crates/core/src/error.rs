use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A value object could not be constructed from the given inputs.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A solver or simulator produced a non-finite or inadmissible state.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A stability condition of an explicit scheme was violated.
    #[error("CFL violation: {what} = {value:.4e} exceeds {limit:.4e}")]
    Cfl {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that stem from a numerical scheme rather than from
    /// bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Cfl { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
