use thiserror::Error;

/// Errors produced by the simulator and its tooling.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented constraint.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    /// The mixing matrix is disconnected or periodic.
    #[error("zero spectral gap: second eigenvalue magnitude is {second_eigenvalue}")]
    ZeroSpectralGap { second_eigenvalue: f64 },

    /// The problem's normal matrix is (numerically) singular.
    #[error("degenerate problem: {0}")]
    Degenerate(String),

    /// An iterate became non-finite or exploded.
    #[error("run diverged at round {round}")]
    Divergence { round: usize },

    /// Every learning rate in a grid search diverged.
    #[error("no stable learning rate in grid {grid:?}")]
    NoStableLearningRate { grid: Vec<f64> },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
