use std::path::PathBuf;

/// Errors produced by the reward-inference engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model state error: {0}")]
    State(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("observed state has zero likelihood")]
    ZeroLikelihood,
    #[error("reward parameters diverged at iteration {iteration} (norm {norm:.3e})")]
    Divergence { iteration: usize, norm: f64 },
    #[error("search space too large: about {estimate:.3e} trajectories, limit {limit:.0e}")]
    SearchTooLarge { estimate: f64, limit: f64 },
    #[error("zero-norm feature vector: {0}")]
    ZeroFeatures(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: msg.into(),
        }
    }
}
