//! Error type shared by the whole library.
//!
//! Every variant carries a short machine-readable category (stable across
//! releases, used verbatim by the command line tool) plus a human-readable
//! message.

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A function argument violated its contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration file could not be parsed or failed validation.
    #[error("config: {0}")]
    Config(String),

    /// A data or model file is malformed.
    #[error("format: {0}")]
    Format(String),

    /// Underlying I/O failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Training produced a non-finite loss or gradient.
    #[error("training divergence: {0}")]
    TrainingDivergence(String),
}

impl Error {
    /// Stable one-word category, suitable for scripted consumers.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Config(_) => "config-error",
            Error::Format(_) => "format-error",
            Error::Io(_) => "io-error",
            Error::TrainingDivergence(_) => "training-divergence",
        }
    }

    /// Process exit code the command line tool maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::Config(_) => 3,
            Error::Format(_) => 4,
            Error::Io(_) => 5,
            Error::TrainingDivergence(_) => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for building an [`Error::InvalidArgument`].
pub fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
