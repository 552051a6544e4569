use thiserror::Error;

/// Crate-wide error type. The CLI maps the variants onto process exit
/// codes, so keep the classification stable: configuration and input
/// validation problems are `Config`, solver failures are `Numerical`,
/// filesystem problems are `Io`.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid curve construction or an operation applied to a filament
    /// whose boundary kind does not support it.
    #[error("geometry: {0}")]
    Geometry(String),

    /// Invalid configuration, parameters, or input file contents.
    #[error("config: {0}")]
    Config(String),

    /// Solver breakdown: step-size underflow, NaN/Inf coordinates,
    /// divergence past the coordinate guard.
    #[error("numerical: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
