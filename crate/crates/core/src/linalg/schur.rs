//! Complex Schur decomposition `A = U·T·U*` by Hessenberg reduction and
//! single-shift QR iteration, with adjacent-eigenvalue swapping for reordering.

use super::matrix::{ComplexMatrix, C64, ONE, ZERO};
use crate::error::{BvpError, Result};

#[derive(Clone, Debug)]
pub struct Schur {
    pub u: ComplexMatrix,
    pub t: ComplexMatrix,
}

/// Plane rotation `[c s; -conj(s) c]` with real `c`.
#[derive(Clone, Copy, Debug)]
struct Givens {
    c: f64,
    s: C64,
}

impl Givens {
    /// Rotation mapping `(x, y)` to `(r, 0)`.
    fn zeroing(x: C64, y: C64) -> Self {
        let ny = y.norm();
        if ny == 0.0 {
            return Self { c: 1.0, s: ZERO };
        }
        let nx = x.norm();
        if nx == 0.0 {
            return Self {
                c: 0.0,
                s: y.conj() / ny,
            };
        }
        let nrm = nx.hypot(ny);
        Self {
            c: nx / nrm,
            s: (x / nx) * y.conj() / nrm,
        }
    }

    /// `M ← G·M` on rows `k, k+1`.
    fn apply_rows(&self, m: &mut ComplexMatrix, k: usize) {
        for j in 0..m.cols() {
            let a = m[(k, j)];
            let b = m[(k + 1, j)];
            m[(k, j)] = a * self.c + self.s * b;
            m[(k + 1, j)] = -self.s.conj() * a + b * self.c;
        }
    }

    /// `M ← M·G*` on columns `k, k+1`.
    fn apply_cols_adjoint(&self, m: &mut ComplexMatrix, k: usize) {
        for i in 0..m.rows() {
            let x = m[(i, k)];
            let y = m[(i, k + 1)];
            m[(i, k)] = x * self.c + y * self.s.conj();
            m[(i, k + 1)] = -x * self.s + y * self.c;
        }
    }
}

impl Schur {
    pub fn eigenvalues(&self) -> Vec<C64> {
        (0..self.t.rows()).map(|i| self.t[(i, i)]).collect()
    }

    /// Swaps the diagonal entries at `k` and `k+1` by a unitary similarity,
    /// keeping `T` upper triangular.
    pub fn swap_adjacent(&mut self, k: usize) {
        let a = self.t[(k, k)];
        let b = self.t[(k + 1, k + 1)];
        let t = self.t[(k, k + 1)];
        let g = Givens::zeroing(t, b - a);
        if g.c == 1.0 && g.s == ZERO {
            // a == b and t == 0 already: nothing to move.
            return;
        }
        g.apply_rows(&mut self.t, k);
        g.apply_cols_adjoint(&mut self.t, k);
        g.apply_cols_adjoint(&mut self.u, k);
        self.t[(k + 1, k)] = ZERO;
    }
}

pub fn schur(a: &ComplexMatrix) -> Result<Schur> {
    if !a.is_square() {
        return Err(BvpError::DimensionMismatch(
            "schur of non-square matrix".into(),
        ));
    }
    let n = a.rows();
    let (mut h, mut u) = hessenberg(a);
    if n <= 1 {
        return Ok(Schur { u, t: h });
    }
    let eps = f64::EPSILON;
    let norm = h.max_abs();
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        // Find the bottom of the active window.
        let sub = h[(hi, hi - 1)].norm();
        let local = h[(hi - 1, hi - 1)].norm() + h[(hi, hi)].norm();
        if sub <= eps * local.max(eps * norm) || sub < f64::MIN_POSITIVE {
            h[(hi, hi - 1)] = ZERO;
            hi -= 1;
            iter = 0;
            continue;
        }
        let mut lo = hi - 1;
        while lo > 0 {
            let s = h[(lo, lo - 1)].norm();
            let l = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            if s <= eps * l.max(eps * norm) || s < f64::MIN_POSITIVE {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        iter += 1;
        total += 1;
        if iter > 60 * n {
            return Err(BvpError::SchurNoConvergence {
                index: hi,
                iterations: total,
            });
        }
        let shift = if iter.is_multiple_of(11) {
            h[(hi, hi)] + C64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            )
        };
        let mut g = Givens::zeroing(h[(lo, lo)] - shift, h[(lo + 1, lo)]);
        for k in lo..hi {
            if k > lo {
                g = Givens::zeroing(h[(k, k - 1)], h[(k + 1, k - 1)]);
            }
            g.apply_rows(&mut h, k);
            g.apply_cols_adjoint(&mut h, k);
            g.apply_cols_adjoint(&mut u, k);
            if k > lo {
                h[(k + 1, k - 1)] = ZERO;
            }
        }
    }
    for i in 1..n {
        for j in 0..i {
            h[(i, j)] = ZERO;
        }
    }
    Ok(Schur { u, t: h })
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let half_tr = (a + d) * 0.5;
    let disc = ((a - d) * 0.5).powi(2) + b * c;
    let root = disc.sqrt();
    let l1 = half_tr + root;
    let l2 = half_tr - root;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Householder reduction to upper Hessenberg form, `A = U·H·U*`.
fn hessenberg(a: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.rows();
    let mut h = a.clone();
    let mut u = ComplexMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let phase = if x[0].norm() == 0.0 {
            ONE
        } else {
            x[0] / x[0].norm()
        };
        let mut v = x.clone();
        v[0] += phase * xnorm;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        // H ← (I − β v v*) H on rows k+1..n.
        for j in 0..n {
            let mut s = ZERO;
            for (l, vl) in v.iter().enumerate() {
                s += vl.conj() * h[(k + 1 + l, j)];
            }
            s *= beta;
            for (l, vl) in v.iter().enumerate() {
                h[(k + 1 + l, j)] -= vl * s;
            }
        }
        // H ← H (I − β v v*) and U ← U (I − β v v*) on columns k+1..n.
        for m in [&mut h, &mut u] {
            for i in 0..n {
                let mut s = ZERO;
                for (l, vl) in v.iter().enumerate() {
                    s += m[(i, k + 1 + l)] * vl;
                }
                s *= beta;
                for (l, vl) in v.iter().enumerate() {
                    m[(i, k + 1 + l)] -= s * vl.conj();
                }
            }
        }
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
    (h, u)
}
