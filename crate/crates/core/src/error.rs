use thiserror::Error;

/// Errors produced by the fixed-point toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("degenerate bifurcation at beta = {beta}: {detail}")]
    DegenerateBifurcation { beta: f64, detail: String },

    #[error("invalid face {indices:?}: {detail}")]
    InvalidFace { indices: Vec<usize>, detail: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("region is full-dimensional, it has no side facets")]
    NoSideFacets,

    #[error("hull projection did not converge after {iterations} iterations (KKT residual {residual:e})")]
    ProjectionFailed { iterations: usize, residual: f64 },

    #[error("fixed-point refinement failed (best residual {best_residual:e})")]
    RefinementFailed { best_residual: f64 },

    #[error("catalog inconsistency: {0}")]
    Inconsistent(String),

    #[error("CIPS violated for indices {indices:?}: margin {margin:e}")]
    CipsViolation { indices: Vec<usize>, margin: f64 },

    #[error("epsilon {epsilon} too large: face margin {margin} must exceed 2*epsilon")]
    EpsilonTooLarge { epsilon: f64, margin: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
