use thiserror::Error;

/// Unified error type for every layer of the library.
///
/// Validation failures (bad shapes, broken symmetry, ill-formed configs) map
/// to process exit code 2, bound/identity violations to 3, and resource caps
/// to 4; see [`CoreError::exit_code`].
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("instance too large: {required} elements exceeds cap {cap}")]
    InstanceTooLarge { required: usize, cap: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("matrix is not Hermitian (residual {0:.3e})")]
    NotHermitian(f64),

    #[error("pair potential is not swap-symmetric (residual {0:.3e})")]
    NotSwapSymmetric(f64),

    #[error("kernel is not permutation-symmetric (residual {0:.3e})")]
    NotSymmetric(f64),

    #[error("state is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("observable arity {p} exceeds particle count {n}")]
    BadArity { p: usize, n: usize },

    #[error("state and Hamiltonian live on different bases")]
    BasisMismatch,

    #[error("Picard iteration failed to contract after {iterations} iterations in window {window}")]
    PicardNoConvergence { window: usize, iterations: usize },

    #[error("integration grid too coarse: refinement changed output by {delta:.3e} > {tol:.3e}")]
    GridTooCoarse { delta: f64, tol: f64 },

    #[error("arity {arity} exceeds configured cap {cap}")]
    ArityCapExceeded { arity: usize, cap: usize },

    #[error("time {t} outside the small-time regime t <= tau = {tau}")]
    TOutOfRange { t: f64, tau: f64 },

    #[error("free theory: no interaction, tau is infinite")]
    FreeTheory,

    #[error("bound violation: {0}")]
    BoundViolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    /// Process exit code the CLI reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::BoundViolation(_) => 3,
            CoreError::InstanceTooLarge { .. } | CoreError::ArityCapExceeded { .. } => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
