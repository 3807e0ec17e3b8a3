use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ball below grid resolution: no cell center inside ball of radius {radius}")]
    EmptyBall { radius: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate evaluation: A(z) is not differentiable at z = 0 for p = {p} < 2 without regularization")]
    DegenerateEvaluation { p: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("below grid resolution: mollifier width {width} < h = {h}")]
    BelowResolution { width: f64, h: f64 },

    #[error("tail radius {r} reaches the truncation radius {ext_radius} but the far field is unset")]
    FarFieldUnset { r: f64, ext_radius: f64 },

    #[error("Dirichlet complement violated at node {node}: u = {u}, g = {g}")]
    DirichletViolated { node: usize, u: f64, g: f64 },

    #[error("dense kernel storage refused: {pairs} node pairs exceed the budget of {budget}; pass dense_ok to override")]
    DenseBudget { pairs: usize, budget: usize },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Box<crate::solver::SolveFailure>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
