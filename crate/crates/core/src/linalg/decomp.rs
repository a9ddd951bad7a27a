//! LU and Cholesky factorizations, and the triangular Sylvester solver used
//! to decouple Schur blocks.

use super::matrix::{ComplexMatrix, C64, ONE, ZERO};
use crate::error::{BvpError, Result};

/// LU factorization with partial pivoting, `P·A = L·U`, packed in place.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: ComplexMatrix,
    perm: Vec<usize>,
    sign: f64,
    /// Smallest pivot magnitude relative to the largest entry of `A`.
    pub min_pivot_ratio: f64,
}

impl Lu {
    pub fn new(a: &ComplexMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(BvpError::DimensionMismatch(format!(
                "LU of non-square {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let scale = a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let (piv, mag) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            min_pivot = min_pivot.min(mag);
            if piv != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = t;
                }
                perm.swap(k, piv);
                sign = -sign;
            }
            let d = lu[(k, k)];
            if d == ZERO {
                continue;
            }
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f == ZERO {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        let min_pivot_ratio = if n == 0 {
            1.0
        } else if scale == 0.0 {
            0.0
        } else {
            min_pivot / scale
        };
        Ok(Self {
            lu,
            perm,
            sign,
            min_pivot_ratio,
        })
    }

    pub fn det(&self) -> C64 {
        let n = self.lu.rows();
        (0..n).fold(C64::new(self.sign, 0.0), |acc, i| acc * self.lu[(i, i)])
    }

    fn is_singular(&self) -> bool {
        let n = self.lu.rows();
        n > 0 && self.min_pivot_ratio <= (n as f64) * f64::EPSILON
    }

    /// Solves `A·X = B`.
    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        let n = self.lu.rows();
        if b.rows() != n {
            return Err(BvpError::DimensionMismatch(format!(
                "right-hand side has {} rows, expected {n}",
                b.rows()
            )));
        }
        if self.is_singular() {
            return Err(BvpError::SingularMatrix);
        }
        let mut x = ComplexMatrix::from_fn(n, b.cols(), |i, j| b[(self.perm[i], j)]);
        for c in 0..b.cols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        Ok(x)
    }
}

pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    Lu::new(a)?.solve(&ComplexMatrix::identity(a.rows()))
}

pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    Lu::new(a)?.solve(b)
}

pub fn determinant(a: &ComplexMatrix) -> Result<C64> {
    Ok(Lu::new(a)?.det())
}

/// Solves `A·X = B` for Hermitian positive definite `A` by Cholesky.
///
/// The factorization fails on the first pivot that is not strictly positive
/// (relative to the diagonal scale); the error names that pivot.
pub fn solve_hermitian_spd(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(BvpError::DimensionMismatch(format!(
            "cholesky solve with A {}x{} and b {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let herm_err = (a - &a.adjoint()).max_abs();
    let scale = a.max_abs();
    if herm_err > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(BvpError::Precondition(format!(
            "matrix is not Hermitian (asymmetry {herm_err:.3e})"
        )));
    }
    let diag_scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max);
    let floor = (n as f64) * f64::EPSILON * diag_scale;
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > floor) {
            return Err(BvpError::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Solves `A·X − X·B = C` for upper triangular `A` (n×n) and `B` (k×k) with
/// disjoint spectra, column by column.
pub fn solve_triangular_sylvester(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    c: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let n = a.rows();
    let k = b.rows();
    if c.shape() != (n, k) {
        return Err(BvpError::DimensionMismatch(
            "sylvester right-hand side".into(),
        ));
    }
    let scale = a.max_abs().max(b.max_abs()).max(f64::MIN_POSITIVE);
    let mut x = ComplexMatrix::zeros(n, k);
    for j in 0..k {
        let mut rhs: Vec<C64> = (0..n).map(|i| c[(i, j)]).collect();
        for (l, r) in rhs.iter_mut().enumerate() {
            for i in 0..j {
                *r += x[(l, i)] * b[(i, j)];
            }
        }
        let shift = b[(j, j)];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for l in i + 1..n {
                s -= a[(i, l)] * x[(l, j)];
            }
            let d = a[(i, i)] - shift;
            if d.norm() <= f64::EPSILON * scale {
                return Err(BvpError::SingularMatrix);
            }
            x[(i, j)] = s / d;
        }
    }
    Ok(x)
}

/// Dot product `x* y`.
pub(crate) fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
}

pub(crate) fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[allow(dead_code)]
pub(crate) fn unit(n: usize, i: usize) -> Vec<C64> {
    let mut v = vec![ZERO; n];
    v[i] = ONE;
    v
}
