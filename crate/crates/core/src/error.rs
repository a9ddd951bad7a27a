use thiserror::Error;

use crate::linalg::{SvdResult, C64};

pub type Result<T> = std::result::Result<T, BvpError>;

#[derive(Debug, Error)]
pub enum BvpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    /// Jacobi sweeps did not converge; the partially orthogonalized state is
    /// kept for diagnosis.
    #[error("svd did not converge after {sweeps} sweeps (off-diagonal ratio {off_diagonal:.3e})")]
    SvdNoConvergence {
        sweeps: usize,
        off_diagonal: f64,
        partial: Box<SvdResult>,
    },

    #[error("schur iteration did not converge at index {index} after {iterations} iterations")]
    SchurNoConvergence { index: usize, iterations: usize },

    #[error("matrix is not positive definite: pivot {pivot} is {value:.3e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is numerically singular")]
    SingularMatrix,

    #[error("singular pencil: det(sF - G) vanishes identically")]
    SingularPencil,

    #[error(
        "defective beyond tolerance: eigenvalue cluster near {eigenvalue} of size {size} \
         needs a similarity with condition number {condition:.3e}"
    )]
    DefectiveBeyondTolerance {
        eigenvalue: C64,
        size: usize,
        condition: f64,
    },

    #[error("no finite dynamics: the pencil has p = 0, only the zero trajectory exists")]
    NoFiniteDynamics,

    #[error("reduced matrix K is rank deficient (rank {rank} of {expected}); {hint}")]
    RankDeficient {
        rank: usize,
        expected: usize,
        hint: &'static str,
    },

    #[error("E too small: K*K + E*E is not numerically invertible ({0})")]
    RegularizerTooSmall(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}
