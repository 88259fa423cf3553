use thiserror::Error;

/// Errors produced by the calibration toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point lies behind the camera (depth {depth})")]
    NonPositiveDepth { depth: f64 },

    #[error("intrinsic matrix is singular (alpha = {alpha}, beta = {beta})")]
    SingularIntrinsics { alpha: f64, beta: f64 },

    #[error("distortion function has a pole at radius {radius}")]
    PoleAtRadius { radius: f64 },

    #[error("undistortion equation has no real root for distorted radius {r_d}")]
    NoRealRoot { r_d: f64 },

    #[error("undistortion equation is degenerate (both quadratic and linear terms vanish)")]
    DegenerateQuadratic,

    #[error("iteration did not converge after {iterations} steps (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid piecewise knot: {0}")]
    InvalidKnot(String),

    #[error("no feature points to compute a radius from")]
    EmptyDataset,

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("need at least {needed} views, got {got}")]
    InsufficientViews { needed: usize, got: usize },

    #[error("ill-conditioned closed-form estimate: {0}")]
    IllConditioned(String),

    #[error("coefficient count mismatch for {kind}: expected {expected}, got {got}")]
    CoefficientCount {
        kind: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("operation not supported for this model: {0}")]
    Unsupported(String),

    #[error("point {point} of view {view} falls outside the image")]
    PointOutOfFrame { view: usize, point: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
