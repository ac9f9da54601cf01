//! Error types for the spin-dynamics engine.

use thiserror::Error;

/// Errors produced by construction, validation, and integration routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A nuclear spin quantum number that is not a positive half-integer.
    #[error("invalid nuclear spin quantum number {0}: must be a half-integer >= 1/2")]
    InvalidSpin(f64),

    /// A parameter was NaN or infinite.
    #[error("parameter `{name}` is not finite: {value}")]
    NonFinite { name: &'static str, value: f64 },

    /// A parameter outside its legal range.
    #[error("parameter `{name}` = {value} out of range: {constraint}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    /// Nucleus index past the end of the system's nucleus list.
    #[error("nucleus index {index} out of range for system with {count} nuclei")]
    InvalidSite { index: usize, count: usize },

    /// Matrix or vector dimension does not match the system dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A matrix failed the Hermiticity check.
    #[error("matrix not Hermitian: max |A - A^dag| element = {max_dev:e}")]
    NotHermitian { max_dev: f64 },

    /// A density matrix failed the positive-semidefiniteness check.
    #[error("density matrix not positive semidefinite: min eigenvalue = {min_eigenvalue:e}")]
    NotPositive { min_eigenvalue: f64 },

    /// A density matrix trace outside (0, 1].
    #[error("density matrix trace {trace} outside (0, 1]")]
    InvalidTrace { trace: f64 },

    /// A state vector that is not unit-norm.
    #[error("state vector norm {norm} deviates from 1 beyond tolerance")]
    NotNormalized { norm: f64 },

    /// The legacy coherence measure is undefined (zero singlet or triplet population).
    #[error("coherence measure undefined: Tr(rho_SS) or Tr(rho_TT) is zero")]
    UndefinedMeasure,

    /// A coherence radicand was negative beyond floating-point tolerance.
    #[error("numerical consistency failure: coherence radicand {0:e} < 0 beyond tolerance")]
    NegativeRadicand(f64),

    /// Coherence distillation requested at (numerically) zero coherence.
    #[error("singular decomposition: p_coh = {0:e} too small to distill the coherent part")]
    SingularDecomposition(f64),

    /// Step size too large for the requested rates.
    #[error("stability guard: {what} = {value} exceeds limit {limit}")]
    StabilityGuard {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    /// The integrator produced a non-physical state.
    #[error("integration failure at step {step}: {detail}")]
    IntegrationFailure { step: usize, detail: String },

    /// A projection jump onto a subspace the state has no overlap with.
    #[error("impossible jump: squared projection norm {norm_sq:e} below threshold")]
    ImpossibleJump { norm_sq: f64 },

    /// Backend linear-algebra failure (eigendecomposition).
    #[error("linear algebra error: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;
