use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid config value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("rejection sampling exceeded {0} attempts")]
    RejectionCap(usize),

    #[error("code construction failed after {0} attempts")]
    CodeConstruction(usize),

    #[error("numeric divergence at iteration {iter}: {what}")]
    NumericDivergence { iter: usize, what: String },

    #[error("singular quantity: {0}")]
    Singularity(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
