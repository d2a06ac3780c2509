use std::path::PathBuf;

use nalgebra::DMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative spectral exponent {exponent} requires a positive floor")]
    Singular { exponent: f64 },

    #[error("binomial coefficient C({n}, {k}) overflows u128")]
    Overflow { n: u64, k: u64 },

    #[error("feature map length C({m}+{q}, {q}) exceeds the oracle limit of {limit}")]
    FeatureMapTooLarge { m: usize, q: u32, limit: usize },

    #[error("nothing to complete: every entry is observed")]
    NothingToComplete,

    #[error("objective diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        /// Last iterate whose objective was finite.
        last_finite: Box<DMatrix<f64>>,
    },

    #[error("metric undefined: {0}")]
    ZeroDenominator(&'static str),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
