use thiserror::Error;

/// Errors raised by constructors and gated operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator is not hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("invalid density matrix: {reason}")]
    InvalidDensity { reason: String },

    #[error("basis is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },

    #[error("ambiguous Bohr cluster around {frequency}: spread {spread:.3e} exceeds tolerance {tol:.3e}")]
    ClusterAmbiguity { frequency: f64, spread: f64, tol: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid partition: {reason}")]
    InvalidPartition { reason: String },

    /// A structural hypothesis on an entangling family failed.
    #[error("entangling family violates {condition} at (n={n}, n'={m}): residual {residual:.3e}")]
    FamilyInvalid {
        condition: &'static str,
        n: usize,
        m: usize,
        residual: f64,
    },

    /// A standing hypothesis ([Z,P0]=0 or A00=0) does not hold.
    #[error("gate `{check}` failed: residual {residual:.3e} > tol {tol:.3e}")]
    GateFailure {
        check: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error("operator is not hermiticity preserving (residual {residual:.3e})")]
    NotHermiticityPreserving { residual: f64 },

    #[error("ODE step size underflow at t = {time}")]
    StepUnderflow { time: f64 },

    #[error("non-unique steady state: kernel dimension {kernel_dim}")]
    NonUniqueSteadyState { kernel_dim: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
