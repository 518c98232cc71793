use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("constraint {constraint} references variable {index}, but only {count} variables exist")]
    BadIndex {
        constraint: usize,
        index: usize,
        count: usize,
    },
    #[error("variable {index} ({name}) has inverted bounds")]
    InvertedBounds { index: usize, name: String },
    #[error("binary variable {index} ({name}) has bounds outside [0, 1]")]
    BinaryBounds { index: usize, name: String },
    #[error("objective has {got} coefficients for {expected} variables")]
    ObjectiveLength { expected: usize, got: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("piecewise-linear curve: {0}")]
    Curve(String),
    #[error("non-convex curve cannot be encoded without binaries")]
    NonConvex,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("solve cancelled")]
    Cancelled,
}
