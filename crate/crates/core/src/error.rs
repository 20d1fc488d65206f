use thiserror::Error;

/// Errors raised anywhere in the analysis stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IqcError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid interval [{alpha}, {beta}]: {reason}")]
    InvalidInterval {
        alpha: f64,
        beta: f64,
        reason: &'static str,
    },

    #[error("frequency response evaluated at a pole (omega = {omega})")]
    Pole { omega: f64 },

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("matrix is not Hurwitz (max real part {max_real_part:e})")]
    NotHurwitz { max_real_part: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("eigenvalue within {tol:e} of the imaginary axis ({re:e} + {im:e}i)")]
    AxisEigenvalue { re: f64, im: f64, tol: f64 },

    #[error("expected a {expected}-dimensional stable invariant subspace, found {found}")]
    StableSubspace { expected: usize, found: usize },

    #[error("invariant subspace basis is ill-conditioned (condition {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("loop is not well-posed at delta = {delta} (|det(I - D delta)| = {det:e})")]
    IllPosed { delta: f64, det: f64 },

    #[error("LMIs infeasible; certificate concentrated on: {}", constraints.join(", "))]
    Infeasible { constraints: Vec<String> },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("no feasible gamma in [{lo:e}, {hi:e}]")]
    NoFeasibleGamma { lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, IqcError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(IqcError::Dimension(msg.into()))
}
