//! Dense complex linear algebra with explicit tolerance semantics.
//!
//! Every rank decision in the crate goes through [`numerical_rank`] or the
//! basis helpers built on the same singular-value threshold, so a single
//! tolerance convention governs classification.

mod decomp;
mod matrix;
mod schur;
mod svd;

pub use decomp::{
    determinant, inverse, solve, solve_hermitian_spd, solve_triangular_sylvester, Lu,
};
pub use matrix::{ComplexMatrix, C64};
pub use schur::{schur, Schur};
pub use svd::{svd, SvdResult};

pub(crate) use decomp::{dot, norm2};
pub(crate) use matrix::{ONE, ZERO};

use crate::error::{BvpError, Result};

/// Default absolute rank threshold `σ_max · max(rows, cols) · ε`.
pub fn default_rank_tol(sigma_max: f64, rows: usize, cols: usize) -> f64 {
    sigma_max * (rows.max(cols) as f64) * f64::EPSILON
}

fn resolve_tol(s: &SvdResult, rows: usize, cols: usize, tol: Option<f64>) -> f64 {
    tol.unwrap_or_else(|| default_rank_tol(s.sigma_max(), rows, cols))
}

/// Number of singular values strictly above `tol` (absolute).
pub fn numerical_rank(a: &ComplexMatrix, tol: Option<f64>) -> Result<usize> {
    let s = svd(a)?;
    Ok(rank_of(&s, a.rows(), a.cols(), tol))
}

pub(crate) fn rank_of(s: &SvdResult, rows: usize, cols: usize, tol: Option<f64>) -> usize {
    let t = resolve_tol(s, rows, cols, tol);
    s.singular_values.iter().filter(|&&x| x > t).count()
}

/// Moore-Penrose pseudoinverse `V·Σ⁺·U*`, truncating singular values at or
/// below `tol`. The zero matrix maps to the zero matrix of transposed shape.
pub fn pseudoinverse(a: &ComplexMatrix, tol: Option<f64>) -> Result<ComplexMatrix> {
    let s = svd(a)?;
    Ok(pinv_from_svd(&s, a.rows(), a.cols(), tol))
}

pub(crate) fn pinv_from_svd(
    s: &SvdResult,
    rows: usize,
    cols: usize,
    tol: Option<f64>,
) -> ComplexMatrix {
    filtered_inverse(s, rows, cols, tol, |sigma| 1.0 / sigma)
}

/// `V·diag(filter(σ_i))·U*` over the singular values above `tol`.
pub(crate) fn filtered_inverse(
    s: &SvdResult,
    rows: usize,
    cols: usize,
    tol: Option<f64>,
    filter: impl Fn(f64) -> f64,
) -> ComplexMatrix {
    let t = resolve_tol(s, rows, cols, tol);
    let mut x = ComplexMatrix::zeros(cols, rows);
    for (k, &sigma) in s.singular_values.iter().enumerate() {
        if sigma <= t {
            break;
        }
        let w = filter(sigma);
        for i in 0..cols {
            let vik = s.v[(i, k)] * w;
            for j in 0..rows {
                x[(i, j)] += vik * s.u[(j, k)].conj();
            }
        }
    }
    x
}

/// Largest singular value.
pub fn spectral_norm(a: &ComplexMatrix) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(svd(a)?.sigma_max())
}

/// Default relative tolerance of [`colspan_membership`].
pub const COLSPAN_TOL: f64 = 1e-10;

/// Projection residual `‖b − A·A†·b‖₂`.
pub fn colspan_residual(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if b.rows() != a.rows() {
        return Err(BvpError::DimensionMismatch(format!(
            "membership test: A has {} rows, b has {}",
            a.rows(),
            b.rows()
        )));
    }
    let pinv = pseudoinverse(a, None)?;
    let proj = &(a * &pinv) * b;
    Ok((b - &proj).norm_fro())
}

/// Whether `b` lies in the column span of `A`:
/// `‖b − A·A†·b‖₂ ≤ tol · max(1, ‖b‖₂)`, default `tol = 1e-10`.
pub fn colspan_membership(a: &ComplexMatrix, b: &ComplexMatrix, tol: Option<f64>) -> Result<bool> {
    let tol = tol.unwrap_or(COLSPAN_TOL);
    let r = colspan_residual(a, b)?;
    Ok(r <= tol * b.norm_fro().max(1.0))
}

/// Orthonormal basis (as columns) of the numerical null space of `A`, using
/// the absolute threshold `tol`.
pub fn null_space(a: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    let n = a.cols();
    if a.rows() == 0 {
        return Ok(ComplexMatrix::identity(n));
    }
    let s = svd(a)?;
    let r = s.singular_values.iter().filter(|&&x| x > tol).count();
    Ok(s.v.columns(r, n))
}

/// Orthonormal basis (as columns) of the numerical range of `A`.
pub fn range_basis(a: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    if a.cols() == 0 {
        return Ok(ComplexMatrix::zeros(a.rows(), 0));
    }
    let s = svd(a)?;
    let r = s.singular_values.iter().filter(|&&x| x > tol).count();
    Ok(s.u.columns(0, r))
}

/// 2-norm condition number `σ_max / σ_min` (infinite when singular).
pub fn condition_number(a: &ComplexMatrix) -> Result<f64> {
    if a.is_empty() {
        return Ok(1.0);
    }
    let s = svd(a)?;
    let min = s.singular_values.last().copied().unwrap_or(0.0);
    Ok(if min == 0.0 {
        f64::INFINITY
    } else {
        s.sigma_max() / min
    })
}
