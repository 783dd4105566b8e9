use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quantile level must lie strictly inside (0, 1), got {0}")]
    InvalidQuantile(f64),

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("bandwidth grid must be nonempty with positive entries")]
    InvalidBandwidthGrid,

    #[error("every bandwidth grid value produced a singular local fit")]
    BandwidthGridExhausted,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error(
        "underdetermined local fit: {positive} positive-weight observations \
         for {needed} parameters"
    )]
    UnderdeterminedLocalFit { positive: usize, needed: usize },

    #[error("candidate set is empty")]
    EmptyCandidateSet,

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("train/test split requires 0 < n_test < n, got n_test={n_test}, n={n}")]
    InvalidSplit { n_test: usize, n: usize },

    #[error(
        "candidate for index column {column} is unusable: \
         {failed}/{total} leave-one-out fits failed"
    )]
    CandidateUnusable {
        column: usize,
        failed: usize,
        total: usize,
    },

    #[error("{what}: {failed}/{total} replications failed (over 10% tolerated)")]
    TooManyFailures {
        what: String,
        failed: usize,
        total: usize,
    },

    #[error("dataset columns must partition into continuous/discrete sets: {0}")]
    InvalidColumnPartition(String),

    #[error("dataset too small: n={n} must exceed 2(p+q)={min}")]
    DatasetTooSmall { n: usize, min: usize },

    #[error("error case {case} is not paired with {example} (pass the override flag to force)")]
    InvalidPairing { example: String, case: u8 },

    #[error("CSV file is empty: {0}")]
    EmptyCsv(String),

    #[error("CSV header does not match schema: expected column {expected:?}, got {got:?}")]
    HeaderMismatch { expected: String, got: String },

    #[error("schema column {0:?} missing from CSV header")]
    MissingColumn(String),

    #[error("non-numeric cell at row {row}, column {column:?}: {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("column {0:?} has zero variance and cannot be standardized")]
    ZeroVariance(String),

    #[error("standardization record does not match dataset: {0}")]
    StandardizationMismatch(String),

    #[error("schema must declare exactly one response column, got {0}")]
    BadResponseCount(usize),

    #[error("schema must declare at least one continuous column")]
    NoContinuousColumns,

    #[error("stale model: content hash of {path} is {actual}, model expects {expected}")]
    HashMismatch {
        path: String,
        expected: String,
        actual: String,
    },

    #[error("model file does not contain quantile level tau={0}")]
    TauNotInModel(f64),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("internal solver error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage that produced it.
    pub fn stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
