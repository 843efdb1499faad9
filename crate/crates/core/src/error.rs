use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the decomposition library and its ingestion layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: max |S - S^T| = {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("requested rank {requested} outside [1, {max}]")]
    RankOutOfBounds { requested: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("basis columns are not orthonormal: ||B^T B - I||_F = {0:e}")]
    NotOrthonormal(f64),

    #[error("invalid ranks: {0}")]
    InvalidRanks(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("{source} (at refinement iteration {iteration})")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label {label} at position {index} outside 1..={k}")]
    LabelOutOfRange { index: usize, label: usize, k: usize },

    #[error("probability {value} at ({row}, {col}) outside [0, 1]")]
    ProbabilityOutOfRange { row: usize, col: usize, value: f64 },

    #[error("node count {0} is not divisible by 4")]
    NotDivisibleBy4(usize),

    #[error("matrix has (near-)zero Frobenius norm")]
    ZeroMatrix,

    #[error("need at least 2 values to select a rank, got {0}")]
    TooFewValues(usize),

    #[error("k = {k} exceeds the number of points {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("label vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("negative edge weight {weight} at line {line}")]
    NegativeWeight { line: usize, weight: f64 },

    #[error("edge list contains no edges")]
    EmptyGraph,

    #[error("no nodes in common between the network and the covariates")]
    NoOverlap,

    #[error("column '{0}' is constant and cannot be standardized")]
    ConstantColumn(String),

    #[error("negative entry {value} at ({row}, {col}) cannot be log-transformed; disable the log step for this input (--no-log-network or --no-log-covariates)")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips any [`Error::AtIteration`] wrapping.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by malformed or inconsistent input, as
    /// opposed to I/O trouble or numerical breakdown during estimation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::NotSymmetric { .. }
                | Error::RankOutOfBounds { .. }
                | Error::DimensionMismatch(_)
                | Error::InvalidRanks(_)
                | Error::InvalidConfig(_)
                | Error::LabelOutOfRange { .. }
                | Error::ProbabilityOutOfRange { .. }
                | Error::NotDivisibleBy4(_)
                | Error::TooFewValues(_)
                | Error::Parse { .. }
                | Error::NegativeWeight { .. }
                | Error::EmptyGraph
                | Error::NoOverlap
                | Error::ConstantColumn(_)
                | Error::NegativeEntry { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
