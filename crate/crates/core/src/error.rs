use std::fmt;

/// Which precision matrix a factorization failure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// The prior precision `Q` of the latent field.
    Prior,
    /// The conditional precision `Q_C` of the latent block given the data.
    Conditional,
    /// A matrix factorized outside the posterior pipeline.
    Other,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Prior => write!(f, "prior precision Q"),
            Stage::Conditional => write!(f, "conditional precision Q_C"),
            Stage::Other => write!(f, "matrix"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point outside domain: {axis} coordinate {value} not in [{lo}, {hi}]")]
    OutsideDomain { axis: char, value: f64, lo: f64, hi: f64 },
    #[error("cell index ({i}, {j}) out of range for a {m}x{n} grid")]
    CellOutOfRange { i: usize, j: usize, m: usize, n: usize },
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{stage} is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { stage: Stage, pivot: usize },
    #[error("interpolation error at ({x}, {y}): {reason}")]
    Interpolation { x: f64, y: f64, reason: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Re-labels a factorization failure with the stage it happened in.
    pub fn at_stage(self, stage: Stage) -> Self {
        match self {
            Error::NotPositiveDefinite { pivot, .. } => Error::NotPositiveDefinite { stage, pivot },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
