use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("line {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error("line {line}: invalid wind speed {value} (must be finite and >= 0)")]
    InvalidSpeed { line: usize, value: f64 },

    #[error("misaligned series: {0}")]
    Misaligned(String),

    #[error("invalid parameter '{name}': {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("insufficient data: need at least {required} periods, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    /// Pearson correlation is undefined when either argument has zero variance.
    #[error("degenerate correlation: {0} has zero variance")]
    DegenerateCorrelation(&'static str),

    #[error("no window reaches |rho| >= {threshold}")]
    NoMatch { threshold: f64 },

    #[error("infeasible bounds [{lo}, {hi}]")]
    InfeasibleBounds { lo: f64, hi: f64 },

    #[error("solver did not terminate within {iterations} iterations")]
    MaxIterations { iterations: usize },

    #[error("enumeration budget exceeded: {points} grid points > {budget}")]
    EnumerationBudget { points: f64, budget: f64 },

    #[error("knowledge tree is empty after relaxing down to corr_floor {floor}")]
    EmptyTree { floor: f64 },

    #[error("schema version {found:?} does not match supported version {expected}")]
    SchemaVersion { found: Option<u64>, expected: u64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite training loss at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("target series has zero variance")]
    ConstantTarget,

    #[error("every point falls below the ACC floor {floor} m/s")]
    NoRetainedPoints { floor: f64 },

    #[error("trial failed: {0}")]
    TrialFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Input problems the caller can fix, as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedRow { .. }
                | Error::InvalidSpeed { .. }
                | Error::Misaligned(_)
                | Error::InvalidParameter { .. }
                | Error::InsufficientData { .. }
                | Error::LengthMismatch { .. }
                | Error::InfeasibleBounds { .. }
                | Error::SchemaVersion { .. }
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}
