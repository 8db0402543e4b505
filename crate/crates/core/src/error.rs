use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),

    #[error("{what}: expected length {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("element {element} out of range (mesh has {count} elements)")]
    ElementOutOfRange { element: usize, count: usize },

    #[error("non-positive Jacobian determinant {det:e} in element {element} at quadrature point {qpoint}")]
    NonPositiveJacobian {
        element: usize,
        qpoint: usize,
        det: f64,
    },

    #[error("quadrature data kind mismatch: expected {expected}, got {got}")]
    KindMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("dense assembly of {size} unknowns exceeds the limit of {limit}")]
    AssemblyTooLarge { size: usize, limit: usize },

    #[error("operator is not SPD: p^T A p = {pap:e} at iteration {iteration}")]
    NotPositiveDefinite { iteration: usize, pap: f64 },

    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
