use thiserror::Error;

/// Errors surfaced by the algebra, module and spectral layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("block dimension must be positive")]
    NonPositiveDim,
    #[error("expected {expected} trace weights, got {got}")]
    WeightMismatch { expected: usize, got: usize },
    #[error("operand shapes do not match")]
    ShapeMismatch,
    #[error("entry is not finite")]
    NonFiniteEntry,
    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("Jacobi sweep budget exceeded (off-diagonal norm {off:.3e})")]
    NoConvergence { off: f64 },
    #[error("element is not a projection (defect {defect:.3e})")]
    NotProjection { defect: f64 },
    #[error("family is rank deficient (Gram minimum eigenvalue {min_eig:.3e})")]
    RankDeficient { min_eig: f64 },
    #[error("vector family is not orthonormal (defect {defect:.3e})")]
    NotOrthonormal { defect: f64 },
    #[error("operator is not strictly positive (minimum eigenvalue {min_eig:.3e})")]
    NotStrictlyPositive { min_eig: f64 },
    #[error("eigensolver failed: {0}")]
    SolverFailure(String),
    #[error("instance too large for the exhaustive oracle (dimension {dim})")]
    TooLarge { dim: usize },
    #[error("grid step must be positive")]
    NonPositiveEps,
    #[error("paired partition is invalid: {0}")]
    InvalidPartition(String),
    #[error("trace breakpoint not realizable by an eigenvector subset")]
    TraceMismatchUnresolvable,
    #[error("flux p/q must satisfy 1 <= p < q with gcd(p, q) = 1")]
    BadFlux,
    #[error("grid size must be at least 4")]
    GridTooSmall,
    #[error("iteration count must be between 1 and 40")]
    IterationBudget,
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
