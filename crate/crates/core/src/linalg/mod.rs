//! Dense complex linear algebra used by the measurement compiler.
//!
//! Everything here is a pure function of its inputs. Numerical rank decisions
//! and validation thresholds are centralised in [`Tolerances`].

mod decompose;
mod matrix;

pub use decompose::{
    complete_to_unitary, extend_orthonormal, hermitian_eig, min_eigenvalue, psd_sqrt, pseudo_inverse, svd,
    EigenDecomposition, Svd,
};
pub use matrix::ComplexMatrix;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: ‖A − A†‖_F = {residual:e}")]
    NotHermitian { residual: f64 },
    #[error("matrix is not positive semidefinite: minimum eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },
    #[error("columns are not orthonormal: ‖B†B − I‖_F = {residual:e}")]
    NotIsometry { residual: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{len} entries do not fill a {rows}x{cols} matrix")]
    InvalidShape { rows: usize, cols: usize, len: usize },
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(&'static str),
}

/// Numerical thresholds shared by every module.
///
/// * `rank`: a singular value or eigenvalue counts as nonzero iff it exceeds
///   `rank × (largest value)`.
/// * `check`: absolute Frobenius threshold for validation residuals.
/// * `unitary`: absolute Frobenius threshold for `‖U†U − I‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rank: f64,
    pub check: f64,
    pub unitary: f64,
}

impl Tolerances {
    pub const DEFAULT_RANK: f64 = 1e-10;
    pub const DEFAULT_CHECK: f64 = 1e-9;
    pub const DEFAULT_UNITARY: f64 = 1e-10;

    pub fn new(rank: f64, check: f64, unitary: f64) -> Result<Self, LinalgError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(rank) || rank >= 1.0 {
            return Err(LinalgError::InvalidTolerance("rank threshold must lie in (0, 1)"));
        }
        if !positive(check) {
            return Err(LinalgError::InvalidTolerance("check threshold must be positive"));
        }
        if !positive(unitary) {
            return Err(LinalgError::InvalidTolerance("unitarity threshold must be positive"));
        }
        Ok(Self { rank, check, unitary })
    }

    /// Default thresholds with a different validation threshold.
    pub fn with_check(check: f64) -> Result<Self, LinalgError> {
        Self::new(Self::DEFAULT_RANK, check, Self::DEFAULT_UNITARY)
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: Self::DEFAULT_RANK,
            check: Self::DEFAULT_CHECK,
            unitary: Self::DEFAULT_UNITARY,
        }
    }
}

/// ‖A†A − I‖_F for a (possibly rectangular) matrix.
pub fn isometry_residual(a: &ComplexMatrix) -> f64 {
    (&a.adjoint() * a).distance(&ComplexMatrix::identity(a.cols()))
}
