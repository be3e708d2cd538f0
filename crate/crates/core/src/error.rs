use std::path::PathBuf;

use thiserror::Error;

/// Which kind of entity a diagnostic refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entity {
    Instance(String),
    Task(String),
}

impl std::fmt::Display for Entity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Entity::Instance(id) => write!(f, "instance '{id}'"),
            Entity::Task(id) => write!(f, "task '{id}'"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix asymmetry {asymmetry:.3e} exceeds tolerance {tolerance:.3e}")]
    ExcessiveAsymmetry { asymmetry: f64, tolerance: f64 },

    #[error("eigendecomposition did not converge within {0} iterations")]
    ConvergenceFailure(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("division by near-zero value {0:e}")]
    DivisionByNearZero(f64),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("ragged input: row {row} has length {len}, expected {expected}")]
    RaggedInput { row: usize, len: usize, expected: usize },

    #[error("negative distance {value} at ({row}, {col})")]
    NegativeDistance { row: usize, col: usize, value: f64 },

    #[error("asymmetric input at ({row}, {col})")]
    AsymmetricInput { row: usize, col: usize },

    #[error("kernel is not positive semi-definite: min eigenvalue {min:.3e} below {tolerance:.3e} (use --clip-spectrum to clamp)")]
    NotPsd { min: f64, tolerance: f64 },

    #[error("explicit pairwise matrix of size {size} exceeds cap {cap}")]
    SizeOverflow { size: usize, cap: usize },

    #[error("labels contain a single class; rescoring needs positives and negatives")]
    AllSameClass,

    #[error("labels are not binary: found {value} at ({row}, {col})")]
    NonBinaryLabels { row: usize, col: usize, value: f64 },

    #[error("identifier mismatch: {0}")]
    IdMismatch(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("independent-task model cannot predict for unseen task (test row {0})")]
    ITNewTask(usize),

    #[error("filter divisor is zero (zero eigenvalue with zero regularization)")]
    ZeroDivisor,

    #[error("leave-one-out denominator {value:.3e} below 1e-12 for {entity}; increase regularization or remove duplicated entities")]
    DenominatorUnderflow { entity: Entity, value: f64 },

    #[error("no training data left after holding out")]
    NoTrainingData,

    #[error("truth contains a single class")]
    DegenerateClasses,

    #[error("no slice contains both classes")]
    NoValidSlices,

    #[error("no comparable pairs (all labels equal)")]
    NoComparablePairs,

    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    ParseError {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate identifier '{0}'")]
    IdCollision(String),

    #[error("kernel matrix is not square: {rows} rows, {cols} columns")]
    NonSquareKernel { rows: usize, cols: usize },

    #[error("identifier '{0}' missing from kernel")]
    MissingId(String),

    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failure: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line driver: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            UnsupportedCombination(_) | InvalidParameter(_) => 1,
            ConvergenceFailure(_)
            | DivisionByNearZero(_)
            | SingularSystem(_)
            | ZeroDivisor
            | DenominatorUnderflow { .. }
            | NoTrainingData
            | SizeOverflow { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
