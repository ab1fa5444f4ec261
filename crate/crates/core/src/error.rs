use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// One violated rule in an experiment config.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cells_per_side must be at least 2, got {0}")]
    InvalidGrid(usize),
    #[error("unsupported dimension {0} (expected 1..=3)")]
    InvalidDimension(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid coefficient field: {0}")]
    InvalidField(String),
    #[error(
        "incompatible right-hand side: |1^T b| / |b| = {residual:.3e} exceeds {tolerance:.1e}"
    )]
    IncompatibleRhs { residual: f64, tolerance: f64 },
    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("resolution factor {0} is below the minimum of 8 elements per period")]
    ResolutionTooCoarse(usize),
    #[error("mismatched inputs: {0}")]
    MismatchedInputs(String),
    #[error("rate fit needs at least 3 points, got {0}")]
    InsufficientData(usize),
    #[error("rate fit needs strictly positive epsilon and error values")]
    DegenerateData,
    #[error("invalid config: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Config(Vec<Violation>),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
