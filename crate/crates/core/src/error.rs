use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph needs at least two nodes, got {0}")]
    DegenerateGraph(usize),
    #[error("graph is disconnected ({components} components); supply the largest connected component")]
    Disconnected { components: usize },
    #[error("invalid edge ({a}, {b}) for a graph with {nodes} nodes")]
    InvalidEdge { a: usize, b: usize, nodes: usize },
    #[error("spatial dependence rho = {0} outside [0, 1)")]
    RhoOutOfRange(f64),
    #[error("precision matrix is not positive definite at row {0}")]
    NotPositiveDefinite(usize),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("location {index} at ({x}, {y}) lies outside the spline hull")]
    OutsideHull { index: usize, x: f64, y: f64 },
    #[error("linear predictor overflow at row {row} (eta = {eta})")]
    Overflow { row: usize, eta: f64 },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("initial log-posterior is not finite (chain {chain})")]
    NonFiniteStart { chain: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error in {path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Convergence(_) => 4,
            _ => 3,
        }
    }
}
