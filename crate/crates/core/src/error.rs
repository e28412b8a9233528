//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("elasticity tensor is not elliptic: smallest Voigt eigenvalue {alpha0:.6e} <= 0")]
    NonEllipticTensor { alpha0: f64 },

    #[error("non-positive material coefficient: {0}")]
    NonPositiveCoefficient(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "linear solve failed in {context}: residual {achieved:.3e} > {tol:.3e} \
         after {iterations} iterations{}",
        step.map(|s| format!(" (time step {s})")).unwrap_or_default()
    )]
    LinearSolveFailure {
        context: &'static str,
        achieved: f64,
        tol: f64,
        iterations: usize,
        step: Option<usize>,
    },

    #[error("scenario is inconsistent with the grid: {0}")]
    InconsistentScenario(String),

    #[error("problem too large for the dense eigensolver: {dof} DOF > cap {cap}")]
    TooLargeForDense { dof: usize, cap: usize },

    #[error("grid exceeds the assembly DOF cap: {dof} DOF > cap {cap}")]
    TooManyDof { dof: usize, cap: usize },

    #[error("checkpoint does not match the target grid: {0}")]
    GridMismatch(String),

    #[error("energy trace is empty")]
    EmptyTrace,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no strictly positive energy samples in the fit window: {0}")]
    NonPositiveEnergy(String),

    #[error("eigensolver did not converge: {0}")]
    EigenFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
