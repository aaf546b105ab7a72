use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: String,
        expected: String,
        found: String,
    },

    #[error("`{field}` is not a stochastic matrix/vector: {detail}")]
    NonStochastic { field: String, detail: String },

    #[error("`{field}` is not a symmetric positive definite covariance: {detail}")]
    NonPositiveDefinite { field: String, detail: String },

    #[error("singular matrix while computing {context}")]
    Singular { context: String },

    #[error("every discrete state has zero probability at step {step}")]
    ZeroProbability { step: usize },

    #[error("normal equations for `{parameter}` are rank deficient")]
    RankDeficient { parameter: String },

    #[error("exact enumeration needs {paths} paths, above the cap of {cap}")]
    CapacityExceeded { paths: u128, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty class `{0}`")]
    EmptyClass(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(field: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            field: field.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn singular(context: impl Into<String>) -> Self {
        Error::Singular {
            context: context.into(),
        }
    }
}
