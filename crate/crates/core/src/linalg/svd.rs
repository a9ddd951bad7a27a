//! Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! One-sided Jacobi computes small singular values to high relative accuracy,
//! which matters here because every rank decision downstream is a threshold on
//! them.

use super::decomp::{dot, norm2};
use super::matrix::{ComplexMatrix, C64, ONE, ZERO};
use crate::error::{BvpError, Result};

const MAX_SWEEPS: usize = 80;

/// `A = U·diag(singular_values)·V*` with `U` (rows×rows) and `V` (cols×cols)
/// unitary and singular values sorted non-increasing.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: ComplexMatrix,
    pub singular_values: Vec<f64>,
    pub v: ComplexMatrix,
}

impl SvdResult {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// `U·Σ·V*`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut us = ComplexMatrix::zeros(m, n);
        for (j, &s) in self.singular_values.iter().enumerate() {
            for i in 0..m {
                us[(i, j)] = self.u[(i, j)] * s;
            }
        }
        &us * &self.v.adjoint()
    }
}

pub fn svd(a: &ComplexMatrix) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(BvpError::NonFinite { row: 0, col: 0 });
    }
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let t = svd_tall(&a.adjoint())?;
        Ok(SvdResult {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        })
    }
}

fn svd_tall(a: &ComplexMatrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    // Work column-major: cols[j] is column j of the evolving A·V.
    let mut w: Vec<Vec<C64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![ZERO; n];
            e[j] = ONE;
            e
        })
        .collect();
    let tol = f64::EPSILON * (m.max(1) as f64).sqrt();
    let negligible = f64::EPSILON * a.norm_fro();
    let mut sweeps = 0;
    let mut off: f64;
    loop {
        let mut rotated = false;
        off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let na = norm2(&w[p]);
                let nb = norm2(&w[q]);
                // Columns at the rounding level of ‖A‖ cannot be orthogonalized
                // any further; they are treated as zero.
                if na <= negligible || nb <= negligible || na * nb < f64::MIN_POSITIVE {
                    continue;
                }
                let gamma = dot(&w[p], &w[q]);
                let g = gamma.norm();
                let ratio = g / na / nb;
                off = off.max(ratio);
                if ratio <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (nb - na) * ((nb + na) / (2.0 * g));
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let phase = (gamma / g).conj();
                rotate(&mut w, p, q, c, s, phase);
                rotate(&mut v, p, q, c, s, phase);
            }
        }
        sweeps += 1;
        if !rotated {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            let partial = assemble(m, n, w, v);
            return Err(BvpError::SvdNoConvergence {
                sweeps,
                off_diagonal: off,
                partial: Box::new(partial),
            });
        }
    }
    Ok(assemble(m, n, w, v))
}

fn rotate(cols: &mut [Vec<C64>], p: usize, q: usize, c: f64, s: f64, phase: C64) {
    let (left, right) = cols.split_at_mut(q);
    let x = &mut left[p];
    let y = &mut right[0];
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let xv = *xi;
        let yv = *yi * phase;
        *xi = xv * c - yv * s;
        *yi = xv * s + yv * c;
    }
}

fn assemble(m: usize, n: usize, w: Vec<Vec<C64>>, v: Vec<Vec<C64>>) -> SvdResult {
    let norms: Vec<f64> = w.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma_max = order.first().map_or(0.0, |&i| norms[i]);
    let reliable = sigma_max * (m.max(n) as f64) * f64::EPSILON;

    let mut u_cols: Vec<Vec<C64>> = Vec::with_capacity(m);
    for &j in &order {
        let candidate = if norms[j] > reliable && norms[j] > 0.0 {
            Some(w[j].iter().map(|z| z / norms[j]).collect::<Vec<_>>())
        } else {
            None
        };
        u_cols.push(orthonormal_completion(&u_cols, candidate, m));
    }
    while u_cols.len() < m {
        u_cols.push(orthonormal_completion(&u_cols, None, m));
    }

    let mut u = ComplexMatrix::zeros(m, m);
    for (j, col) in u_cols.iter().enumerate() {
        u.set_column(j, col);
    }
    let mut vm = ComplexMatrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        vm.set_column(k, &v[j]);
    }
    SvdResult {
        u,
        singular_values: order.iter().map(|&j| norms[j]).collect(),
        v: vm,
    }
}

/// Orthonormalizes `candidate` against `basis` (two Gram-Schmidt passes), or
/// picks the standard basis vector that survives projection best.
fn orthonormal_completion(basis: &[Vec<C64>], candidate: Option<Vec<C64>>, m: usize) -> Vec<C64> {
    let project = |mut x: Vec<C64>| {
        for _ in 0..2 {
            for b in basis {
                let h = dot(b, &x);
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi -= h * bi;
                }
            }
        }
        x
    };
    if let Some(c) = candidate {
        let x = project(c);
        let nx = norm2(&x);
        if nx > 0.5 {
            return x.into_iter().map(|z| z / nx).collect();
        }
    }
    let mut best: Option<(f64, Vec<C64>)> = None;
    for i in 0..m {
        let mut e = vec![ZERO; m];
        e[i] = ONE;
        let x = project(e);
        let nx = norm2(&x);
        if best.as_ref().is_none_or(|(b, _)| nx > *b) {
            best = Some((nx, x));
        }
    }
    let (nx, x) = best.expect("completion requested for a full basis");
    x.into_iter().map(|z| z / nx).collect()
}
