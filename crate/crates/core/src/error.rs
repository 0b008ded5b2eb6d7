use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    /// Statistical CSI that violates its structural invariants (e.g. a
    /// correlation matrix that is not PSD).
    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Every candidate direction collapsed to zero; the caller should restart
    /// from a different initialization.
    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("precoder recovery failed: {0}")]
    Recovery(String),

    #[error("config error in `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
