use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("edge set contains a directed cycle")]
    Cyclic,

    #[error("coefficient matrix has a nonzero diagonal entry at node {0}")]
    NonZeroDiagonal(usize),

    #[error("parent columns of node {node} are numerically rank deficient")]
    RankDeficient { node: usize },

    #[error("node {node} has {parents} parents but only {samples} samples")]
    TooManyParents {
        node: usize,
        parents: usize,
        samples: usize,
    },

    #[error("sample size {n} must exceed the largest edge count {k_max}")]
    InsufficientSamples { n: usize, k_max: usize },

    #[error("candidate search exhausted during the {phase} phase after {built} of {requested} models")]
    SearchExhausted {
        phase: &'static str,
        built: usize,
        requested: usize,
    },

    #[error("weight solver did not converge: KKT residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("I - A is singular")]
    Singular,

    #[error("cannot parse value at row {row}, column {col}: {value:?}")]
    Parse { row: usize, col: usize, value: String },

    #[error("duplicate column name {0:?}")]
    DuplicateHeader(String),

    #[error("missing value at row {row}, column {col}")]
    MissingValue { row: usize, col: usize },

    #[error("column {0} has zero variance")]
    ConstantColumn(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_) => ErrorClass::Usage,
            Error::Parse { .. }
            | Error::DuplicateHeader(_)
            | Error::MissingValue { .. }
            | Error::ConstantColumn(_)
            | Error::Io { .. }
            | Error::Csv(_) => ErrorClass::Data,
            Error::Cyclic
            | Error::NonZeroDiagonal(_)
            | Error::RankDeficient { .. }
            | Error::TooManyParents { .. }
            | Error::InsufficientSamples { .. }
            | Error::SearchExhausted { .. }
            | Error::NotConverged { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::NotSymmetric(_)
            | Error::Singular => ErrorClass::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
