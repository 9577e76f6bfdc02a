use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not semiorthogonal (max deviation of V^T V from I is {deviation:e})")]
    NotSemiorthogonal { deviation: f64 },

    #[error("matrix is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error(
        "iterate collapsed at iteration {iteration} with step size {step:e} \
         (smallest singular value {sigma_min:e}); the step size is too large for the noise level"
    )]
    IterateCollapsed {
        iteration: usize,
        step: f64,
        sigma_min: f64,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset has no inlier/outlier labels")]
    MissingLabels,

    #[error("dataset has no ground-truth basis")]
    MissingTruth,

    #[error("water-filling bisection did not converge (residual {residual:e})")]
    BisectionFailed { residual: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
