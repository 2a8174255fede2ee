use thiserror::Error;

/// Errors raised across the crate. Variants map onto the failure classes the
/// numerical pipeline distinguishes: bad input, refusal near singular loci,
/// failed convergence, and failed certification.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("model definition error: {0}")]
    ModelDefinition(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        context: String,
        iterations: usize,
        residual: f64,
    },
    #[error("point lies outside the tube around V")]
    OutsideTube,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("certification failed: {0}")]
    Certification(String),
}

pub type Result<T> = std::result::Result<T, Error>;
