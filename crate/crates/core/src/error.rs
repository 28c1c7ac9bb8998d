use thiserror::Error;

/// Errors raised by the diagnostics library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("objective is not finite at the requested point (value {0})")]
    DegenerateObjective(f64),
    #[error("direction is not admissible at this point")]
    InvalidDirection,
    #[error("points are not distinct: separation {separation} <= {radius}")]
    NotDistinct { separation: f64, radius: f64 },
    #[error("point lies outside every piece of the domain")]
    OutsideDomain,
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("enumeration bound exceeded: d = {d} > {max}")]
    ExplicitBound { d: usize, max: usize },
    #[error("kernel matrix is not positive definite after jitter escalation (last jitter {0})")]
    KernelNotPsd(f64),
    #[error("singular design: S'S is not invertible")]
    SingularDesign,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
