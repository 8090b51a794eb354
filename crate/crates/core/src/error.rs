use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} is not inside the domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cell size h = {h} is too coarse for collar width {eps}; need h <= {max}")]
    ResolutionTooCoarse { h: f64, eps: f64, max: f64 },

    #[error("raster has no inside cells at h = {h}")]
    EmptyRaster { h: f64 },

    #[error("raster connectivity: {0}")]
    Disconnected(String),

    #[error("expression: {0}")]
    Expression(String),

    #[error("fit quality: {0}")]
    FitQuality(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("eigensolver did not converge in {iterations} block steps; worst relative residual {worst:.3e}")]
    NonConvergence {
        iterations: usize,
        worst: f64,
        residuals: Vec<f64>,
    },

    #[error("index {n} is beyond the Dirichlet ball table (max {max})")]
    TableLimit { n: usize, max: usize },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("perturbation family failed at eps = {eps}: {reason}")]
    Perturbation { eps: f64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
