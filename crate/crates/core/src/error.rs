use thiserror::Error;

/// Errors raised anywhere in the PLRS pipeline.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum PlrsError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("observed states {0:?} are not contiguous in the ordering loss < normal < gain < amplification")]
    NonContiguousStates(Vec<i8>),

    #[error(
        "calls do not respect covariate ordering: x[{lower_index}] = {lower_x} (state {lower_state}) exceeds x[{upper_index}] = {upper_x} (state {upper_state})"
    )]
    OrderingViolation {
        lower_index: usize,
        upper_index: usize,
        lower_x: f64,
        upper_x: f64,
        lower_state: i8,
        upper_state: i8,
    },

    #[error("membership probabilities are required but missing")]
    MissingProbabilities,

    #[error("knots must be strictly increasing and number S-1 = {expected}, got {found:?}")]
    InvalidKnots { expected: usize, found: Vec<f64> },

    #[error("basis column {column} is identically zero (no observations beyond knot {knot})")]
    EmptySegment { column: usize, knot: usize },

    #[error("design matrix is rank deficient (rank {rank} < {k} columns)")]
    RankDeficientDesign { rank: usize, k: usize },

    #[error("constraint matrix is rank deficient ({rows} rows, rank {rank})")]
    RankDeficientConstraints { rows: usize, rank: usize },

    #[error("restricted constraint cone forces an implicit equality")]
    DegenerateCone,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("active-set iteration cap of {0} exceeded")]
    IterationCap(usize),

    #[error("interior-point method did not converge after {iterations} Newton steps (gap {gap:e})")]
    BarrierNotConverged { iterations: usize, gap: f64 },

    #[error("need more observations than coefficients (n = {n}, k = {k})")]
    InsufficientObservations { n: usize, k: usize },

    #[error("exact level probabilities are only available for p <= 2 (got p = {0})")]
    ExactWeightsUnavailable(usize),

    #[error("mixture quantile for level {0} is not bracketed in [0, 1]")]
    QuantileNotBracketed(f64),

    #[error("projection failed on a Monte Carlo draw after retry: {0}")]
    DrawFailed(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("sample columns of {path} do not match those of {reference}")]
    SampleMismatch { path: String, reference: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown gene id {0:?}")]
    UnknownGene(String),
}

impl PlrsError {
    /// Whether the error stems from malformed input rather than the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            PlrsError::Parse { .. }
                | PlrsError::Io { .. }
                | PlrsError::SampleMismatch { .. }
                | PlrsError::Config(_)
                | PlrsError::UnknownGene(_)
                | PlrsError::InvalidInput(_)
                | PlrsError::DimensionMismatch { .. }
                | PlrsError::MissingProbabilities
        )
    }
}

pub type Result<T> = std::result::Result<T, PlrsError>;
