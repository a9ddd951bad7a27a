//! Regularity testing and numerical Weierstrass canonical form of a square
//! pencil `sF − G`.
//!
//! The finite/infinite split is made by rank-revealing Wong sequences rather
//! than by thresholding individual generalized eigenvalues: eigenvalues of a
//! nilpotent block at infinity of index `k` are perturbed by `O(ε^{1/k})`,
//! while the deflating subspaces are perturbed by `O(ε)`. The finite block is
//! then brought to Jordan form through a reordered Schur form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{BvpError, Result};
use crate::linalg::{
    inverse, null_space, range_basis, schur, solve_triangular_sylvester, spectral_norm, svd,
    ComplexMatrix, Lu, Schur, C64, ONE, ZERO,
};

/// The pair `(F, G)` of the system `F·Y_{k+1} = G·Y_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixPencil {
    f: ComplexMatrix,
    g: ComplexMatrix,
}

impl MatrixPencil {
    pub fn new(f: ComplexMatrix, g: ComplexMatrix) -> Result<Self> {
        if !f.is_square() || f.shape() != g.shape() || f.rows() == 0 {
            return Err(BvpError::DimensionMismatch(format!(
                "pencil needs square F and G of equal size m >= 1, got F {}x{} and G {}x{}",
                f.rows(),
                f.cols(),
                g.rows(),
                g.cols()
            )));
        }
        if !f.is_finite() || !g.is_finite() {
            return Err(BvpError::NonFinite { row: 0, col: 0 });
        }
        Ok(Self { f, g })
    }

    pub fn f(&self) -> &ComplexMatrix {
        &self.f
    }

    pub fn g(&self) -> &ComplexMatrix {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.f.rows()
    }

    /// `s·F − G`.
    pub fn eval(&self, s: C64) -> ComplexMatrix {
        &self.f.scale(s) - &self.g
    }
}

/// One evaluation of `det(sF − G)`.
#[derive(Clone, Debug, Serialize)]
pub struct DetSample {
    pub point: [f64; 2],
    pub det_abs: f64,
    /// `σ_min(sF − G) / σ_max(sF − G)`.
    pub sigma_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityVerdict {
    pub regular: bool,
    pub witness: Vec<DetSample>,
}

/// Relative threshold on `σ_min/σ_max` at a sample point, scaled by `m`.
pub const REGULARITY_TOL: f64 = 1e3 * f64::EPSILON;

/// Tests whether `det(sF − G)` vanishes identically by sampling it at `m + 1`
/// seeded pseudo-random points. The pencil is regular when `sF − G` is
/// numerically nonsingular at any sample, i.e. `σ_min > m·REGULARITY_TOL·σ_max`.
pub fn is_regular(pencil: &MatrixPencil, seed: u64) -> RegularityVerdict {
    let m = pencil.dim();
    let nf = pencil.f.norm_fro();
    let ng = pencil.g.norm_fro();
    let radius = if nf > 0.0 && ng > 0.0 { ng / nf } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut witness = Vec::with_capacity(m + 1);
    let mut regular = false;
    for _ in 0..=m {
        let s = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * radius;
        let a = pencil.eval(s);
        let det_abs = Lu::new(&a).map(|lu| lu.det().norm()).unwrap_or(0.0);
        let sigma_ratio = match svd(&a) {
            Ok(sv) if sv.sigma_max() > 0.0 => {
                sv.singular_values.last().copied().unwrap_or(0.0) / sv.sigma_max()
            }
            _ => 0.0,
        };
        if sigma_ratio > (m as f64) * REGULARITY_TOL {
            regular = true;
        }
        witness.push(DetSample {
            point: [s.re, s.im],
            det_abs,
            sigma_ratio,
        });
    }
    RegularityVerdict { regular, witness }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FiniteEigenvalue {
    pub value: C64,
    pub algebraic_multiplicity: usize,
}

/// `P·F·Q = diag(I_p, H_q)`, `P·G·Q = diag(J_p, I_q)`.
#[derive(Clone, Debug)]
pub struct WeierstrassForm {
    /// Left transform `P`.
    pub left: ComplexMatrix,
    /// Right transform `Q`.
    pub right: ComplexMatrix,
    pub jp: ComplexMatrix,
    pub hq: ComplexMatrix,
    pub p: usize,
    pub q: usize,
    /// Nilpotency index of `H_q` (0 when `q = 0`).
    pub q_star: usize,
    pub finite_eigenvalues: Vec<FiniteEigenvalue>,
}

/// `Q = [Q_p | Q_q]`, `P = [P_1 ; P_2]`.
#[derive(Clone, Debug)]
pub struct PencilPartition {
    pub qp: ComplexMatrix,
    pub qq: ComplexMatrix,
    pub p1: ComplexMatrix,
    pub p2: ComplexMatrix,
}

impl WeierstrassForm {
    pub fn partition(&self) -> PencilPartition {
        let m = self.p + self.q;
        PencilPartition {
            qp: self.right.columns(0, self.p),
            qq: self.right.columns(self.p, m),
            p1: self.left.rows_range(0, self.p),
            p2: self.left.rows_range(self.p, m),
        }
    }

    /// Assembles a form from externally supplied blocks, computing `q_*` and
    /// the finite spectrum from `H_q` and `J_p`.
    pub fn from_parts(
        left: ComplexMatrix,
        right: ComplexMatrix,
        jp: ComplexMatrix,
        hq: ComplexMatrix,
    ) -> Result<Self> {
        let p = jp.rows();
        let q = hq.rows();
        let m = p + q;
        if !jp.is_square() || !hq.is_square() || left.shape() != (m, m) || right.shape() != (m, m) {
            return Err(BvpError::DimensionMismatch(format!(
                "canonical form blocks: P {:?}, Q {:?}, Jp {:?}, Hq {:?}",
                left.shape(),
                right.shape(),
                jp.shape(),
                hq.shape()
            )));
        }
        let finite_eigenvalues = spectrum_of(&jp, DecomposeOptions::default().cluster_tol)?;
        Ok(Self {
            q_star: nilpotency_index(&hq),
            left,
            right,
            jp,
            hq,
            p,
            q,
            finite_eigenvalues,
        })
    }

    /// Completes a form from a given finite part `(Q_p, J_p)`, taking the
    /// infinite part `(Q_q, H_q)` from the computed decomposition and setting
    /// `P = [F·Q_p | G·Q_q]⁻¹`.
    pub fn with_finite_part(
        pencil: &MatrixPencil,
        qp: ComplexMatrix,
        jp: ComplexMatrix,
    ) -> Result<Self> {
        let (computed, part) = weierstrass_decompose(pencil)?;
        if qp.shape() != (pencil.dim(), computed.p) || jp.shape() != (computed.p, computed.p) {
            return Err(BvpError::DimensionMismatch(format!(
                "finite part Qp {:?}, Jp {:?} does not match p = {} of the pencil",
                qp.shape(),
                jp.shape(),
                computed.p
            )));
        }
        let y = (pencil.f() * &qp).hstack(&(pencil.g() * &part.qq))?;
        let left = inverse(&y).map_err(|_| {
            BvpError::Precondition("supplied Qp does not complement the infinite subspace".into())
        })?;
        let right = qp.hstack(&part.qq)?;
        Self::from_parts(left, right, jp, computed.hq)
    }
}

/// `‖P·F·Q − diag(I_p, H_q)‖₂` and `‖P·G·Q − diag(J_p, I_q)‖₂`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WcfResiduals {
    pub f_residual: f64,
    pub g_residual: f64,
}

pub fn verify_wcf(pencil: &MatrixPencil, form: &WeierstrassForm) -> Result<WcfResiduals> {
    let m = pencil.dim();
    if form.p + form.q != m
        || form.left.shape() != (m, m)
        || form.right.shape() != (m, m)
        || form.jp.shape() != (form.p, form.p)
        || form.hq.shape() != (form.q, form.q)
    {
        return Err(BvpError::DimensionMismatch(format!(
            "canonical form with p = {}, q = {} does not fit a pencil of size {m}",
            form.p, form.q
        )));
    }
    let pfq = &(&form.left * pencil.f()) * &form.right;
    let pgq = &(&form.left * pencil.g()) * &form.right;
    let f_target = ComplexMatrix::block_diag(&ComplexMatrix::identity(form.p), &form.hq);
    let g_target = ComplexMatrix::block_diag(&form.jp, &ComplexMatrix::identity(form.q));
    Ok(WcfResiduals {
        f_residual: spectral_norm(&(&pfq - &f_target))?,
        g_residual: spectral_norm(&(&pgq - &g_target))?,
    })
}

/// Tolerances of the decomposition.
#[derive(Clone, Copy, Debug)]
pub struct DecomposeOptions {
    /// Relative rank threshold for the deflating-subspace split.
    pub split_tol: f64,
    /// Eigenvalues closer than `cluster_tol·‖J‖` are treated as one cluster.
    pub cluster_tol: f64,
    /// Largest accepted condition number of the Jordan similarity.
    pub max_condition: f64,
    /// Seed for the regularity precheck.
    pub seed: u64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            split_tol: 1e-8,
            cluster_tol: 1e-6,
            max_condition: 1e8,
            seed: 0,
        }
    }
}

pub fn weierstrass_decompose(pencil: &MatrixPencil) -> Result<(WeierstrassForm, PencilPartition)> {
    weierstrass_decompose_with(pencil, &DecomposeOptions::default())
}

pub fn weierstrass_decompose_with(
    pencil: &MatrixPencil,
    opts: &DecomposeOptions,
) -> Result<(WeierstrassForm, PencilPartition)> {
    if !is_regular(pencil, opts.seed).regular {
        return Err(BvpError::SingularPencil);
    }
    let m = pencil.dim();
    let f = pencil.f();
    let g = pencil.g();
    let tol_f = opts.split_tol * spectral_norm(f)?;
    let tol_g = opts.split_tol * spectral_norm(g)?;

    let (w, levels) = infinite_subspace(f, g, tol_f, tol_g)?;
    let v = finite_subspace(f, g, tol_f, tol_g)?;
    let p = v.cols();
    let q = w.cols();
    if p + q != m {
        return Err(BvpError::SingularPencil);
    }

    let y = (f * &v).hstack(&(g * &w))?;
    let left0 = inverse(&y).map_err(|_| BvpError::SingularPencil)?;
    let right0 = v.hstack(&w)?;

    let pgq = &(&left0 * g) * &right0;
    let pfq = &(&left0 * f) * &right0;
    let j0 = pgq.submatrix(0, p, 0, p);
    let mut hq = pfq.submatrix(p, m, p, m);
    // In the staircase basis F maps level-k vectors into G·(levels < k); the
    // remaining entries are rounding noise.
    for a in 0..q {
        for b in 0..q {
            if levels[a] >= levels[b] {
                hq[(a, b)] = ZERO;
            }
        }
    }

    let jordan = jordan_reduce(&j0, opts)?;
    let qp0 = right0.columns(0, p);
    let mut x = jordan.similarity;
    // Canonical scaling: each chain is scaled so that its eigenvector column
    // of Q_p has unit norm and a real positive first nonzero entry.
    for block in &jordan.blocks {
        let col: Vec<C64> = (0..m)
            .map(|i| (0..p).fold(ZERO, |acc, k| acc + qp0[(i, k)] * x[(k, block.start)]))
            .collect();
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let lead = col
            .iter()
            .find(|z| z.norm() > 1e-10 * norm)
            .copied()
            .unwrap_or(ONE);
        let factor = (lead.conj() / lead.norm()) / norm;
        for i in 0..p {
            for c in block.start..block.start + block.size {
                x[(i, c)] *= factor;
            }
        }
    }
    let x_inv = inverse(&x)?;
    let qp = &qp0 * &x;
    let p1 = &x_inv * &left0.rows_range(0, p);
    let p2 = left0.rows_range(p, m);
    let left = p1.vstack(&p2)?;
    let right = qp.hstack(&w)?;

    let form = WeierstrassForm {
        left,
        right,
        jp: jordan.jordan,
        q_star: nilpotency_index(&hq),
        hq,
        p,
        q,
        finite_eigenvalues: jordan.eigenvalues,
    };
    let part = form.partition();
    Ok((form, part))
}

/// Smallest `k` with `‖H^k‖₂ ≤ 1e-10·(1 + ‖H‖₂^k)`.
pub fn nilpotency_index(h: &ComplexMatrix) -> usize {
    let q = h.rows();
    if q == 0 {
        return 0;
    }
    let hn = spectral_norm(h).unwrap_or(f64::INFINITY);
    let mut power = ComplexMatrix::identity(q);
    for k in 1..=q + 1 {
        power = &power * h;
        let pn = spectral_norm(&power).unwrap_or(f64::INFINITY);
        if pn <= 1e-10 * (1.0 + hn.powi(k as i32)) {
            return k;
        }
    }
    q + 1
}

/// Orthonormal staircase basis of the infinite deflating subspace, built from
/// the Wong sequence `W_1 = ker F`, `W_{k+1} = F⁻¹(G·W_k)`. Returns the basis
/// and the level of each basis vector.
fn infinite_subspace(
    f: &ComplexMatrix,
    g: &ComplexMatrix,
    tol_f: f64,
    tol_g: f64,
) -> Result<(ComplexMatrix, Vec<usize>)> {
    let m = f.rows();
    let mut basis = ComplexMatrix::zeros(m, 0);
    let mut levels = Vec::new();
    for level in 1..=m {
        let image = range_basis(&(g * &basis), tol_g)?;
        if image.cols() != basis.cols() {
            // G is not injective on the subspace: ker F ∩ ker G ≠ {0}.
            return Err(BvpError::SingularPencil);
        }
        let projector = &ComplexMatrix::identity(m) - &(&image * &image.adjoint());
        let next = null_space(&(&projector * f), tol_f)?;
        if next.cols() <= basis.cols() {
            break;
        }
        // Extend the previous basis by the part of `next` orthogonal to it.
        let residual = &next - &(&basis * &(&basis.adjoint() * &next));
        let ext = range_basis(&residual, 0.5)?;
        let added = next.cols() - basis.cols();
        if ext.cols() < added {
            return Err(BvpError::SingularPencil);
        }
        basis = basis.hstack(&ext.columns(0, added))?;
        levels.extend(std::iter::repeat_n(level, added));
    }
    Ok((basis, levels))
}

/// Orthonormal basis of the finite deflating subspace, the limit of
/// `V_0 = Cᵐ`, `V_{k+1} = G⁻¹(F·V_k)`.
fn finite_subspace(
    f: &ComplexMatrix,
    g: &ComplexMatrix,
    tol_f: f64,
    tol_g: f64,
) -> Result<ComplexMatrix> {
    let m = f.rows();
    let mut basis = ComplexMatrix::identity(m);
    for _ in 0..=m {
        let image = range_basis(&(f * &basis), tol_f)?;
        let projector = &ComplexMatrix::identity(m) - &(&image * &image.adjoint());
        let next = null_space(&(&projector * g), tol_g)?;
        if next.cols() == basis.cols() {
            return Ok(next);
        }
        if next.cols() > basis.cols() {
            return Err(BvpError::SingularPencil);
        }
        basis = next;
    }
    Ok(basis)
}

/// One Jordan block occupying columns `start..start+size`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct JordanBlock {
    pub start: usize,
    pub size: usize,
}

pub(crate) struct JordanData {
    pub similarity: ComplexMatrix,
    pub jordan: ComplexMatrix,
    pub blocks: Vec<JordanBlock>,
    pub eigenvalues: Vec<FiniteEigenvalue>,
}

/// Canonical eigenvalue order: descending modulus, then descending real part,
/// then descending imaginary part, with ties decided within `tol`.
fn canonical_order(a: C64, b: C64, tol: f64) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let keyed = |x: f64, y: f64| -> Option<Ordering> {
        if (x - y).abs() <= tol {
            None
        } else {
            Some(y.total_cmp(&x))
        }
    };
    keyed(a.norm(), b.norm())
        .or_else(|| keyed(a.re, b.re))
        .or_else(|| keyed(a.im, b.im))
        .unwrap_or(Ordering::Equal)
}

/// Single-linkage clusters of `values` at distance `tol`, each returned as a
/// list of indices.
fn cluster(values: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (values[i] - values[j]).norm() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of_group: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_of_group.iter().position(|&x| x == r) {
            Some(k) => groups[k].push(i),
            None => {
                root_of_group.push(r);
                groups.push(vec![i]);
            }
        }
    }
    groups
}

fn mean(values: &[C64]) -> C64 {
    values.iter().sum::<C64>() / values.len() as f64
}

/// Eigenvalues of `j` with multiplicities, clustered and canonically sorted.
fn spectrum_of(j: &ComplexMatrix, cluster_tol: f64) -> Result<Vec<FiniteEigenvalue>> {
    if j.rows() == 0 {
        return Ok(Vec::new());
    }
    let eig = schur(j)?.eigenvalues();
    let tol = cluster_tol * spectral_norm(j)?.max(f64::MIN_POSITIVE);
    let mut out: Vec<FiniteEigenvalue> = cluster(&eig, tol)
        .into_iter()
        .map(|idx| FiniteEigenvalue {
            value: mean(&idx.iter().map(|&i| eig[i]).collect::<Vec<_>>()),
            algebraic_multiplicity: idx.len(),
        })
        .collect();
    out.sort_by(|a, b| canonical_order(a.value, b.value, tol));
    Ok(out)
}

/// Widest relative cluster tolerance tried before giving up.
const MAX_CLUSTER_TOL: f64 = 1e-3;

/// Largest accepted `‖J·X − X·J_jordan‖ / (‖J‖·‖X‖)`.
const JORDAN_RESIDUAL_TOL: f64 = 1e-10;

/// Similarity `X` with `X⁻¹·J·X` in Jordan form.
///
/// Rounding splits a Jordan block of size `k` into eigenvalues roughly
/// `(ε·κ)^(1/k)` apart, so the cluster tolerance starts at
/// `opts.cluster_tol` and widens by decades until the similarity is both
/// well conditioned and reproduces `J`.
pub(crate) fn jordan_reduce(j: &ComplexMatrix, opts: &DecomposeOptions) -> Result<JordanData> {
    let p = j.rows();
    if p == 0 {
        return Ok(JordanData {
            similarity: ComplexMatrix::zeros(0, 0),
            jordan: ComplexMatrix::zeros(0, 0),
            blocks: Vec::new(),
            eigenvalues: Vec::new(),
        });
    }
    let sch = schur(j)?;
    let scale = spectral_norm(j)?.max(f64::MIN_POSITIVE);
    let mut rel = opts.cluster_tol;
    loop {
        let attempt = jordan_reduce_at(j, sch.clone(), rel * scale, opts).and_then(|data| {
            let lhs = j * &data.similarity;
            let rhs = &data.similarity * &data.jordan;
            let denom = scale * spectral_norm(&data.similarity)?;
            let residual = spectral_norm(&(&lhs - &rhs))? / denom;
            if residual <= JORDAN_RESIDUAL_TOL {
                Ok(data)
            } else {
                let worst = data
                    .eigenvalues
                    .iter()
                    .max_by_key(|e| e.algebraic_multiplicity)
                    .map_or((ZERO, 0), |e| (e.value, e.algebraic_multiplicity));
                Err(BvpError::DefectiveBeyondTolerance {
                    eigenvalue: worst.0,
                    size: worst.1,
                    condition: crate::linalg::condition_number(&data.similarity)?,
                })
            }
        });
        match attempt {
            Ok(data) => return Ok(data),
            Err(e @ BvpError::DefectiveBeyondTolerance { .. }) => {
                rel *= 10.0;
                if rel > MAX_CLUSTER_TOL * (1.0 + 1e-9) {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
}

fn jordan_reduce_at(
    j: &ComplexMatrix,
    mut sch: Schur,
    tol: f64,
    opts: &DecomposeOptions,
) -> Result<JordanData> {
    let p = j.rows();

    let eig = sch.eigenvalues();
    let mut groups: Vec<(C64, Vec<usize>)> = cluster(&eig, tol)
        .into_iter()
        .map(|idx| (mean(&idx.iter().map(|&i| eig[i]).collect::<Vec<_>>()), idx))
        .collect();
    groups.sort_by(|a, b| canonical_order(a.0, b.0, tol));

    // Bubble the diagonal into cluster order with adjacent swaps.
    let mut rank = vec![0usize; p];
    for (r, (_, idx)) in groups.iter().enumerate() {
        for &i in idx {
            rank[i] = r;
        }
    }
    for pass in 0..p {
        let mut swapped = false;
        for k in 0..p - 1 - pass.min(p - 1) {
            if rank[k] > rank[k + 1] {
                sch.swap_adjacent(k);
                rank.swap(k, k + 1);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }

    let sizes: Vec<usize> = groups.iter().map(|(_, idx)| idx.len()).collect();
    let mut t = sch.t;
    let mut s = ComplexMatrix::identity(p);
    let mut start = 0;
    for &size in &sizes {
        let end = start + size;
        if end < p {
            let a = t.submatrix(start, end, start, end);
            let c = t.submatrix(end, p, end, p);
            let b = t.submatrix(start, end, end, p);
            let x = solve_triangular_sylvester(&a, &c, &-&b)?;
            let zero = ComplexMatrix::zeros(size, p - end);
            t.set_block(start, end, &zero);
            let update = &s.columns(start, end) * &x;
            let tail = &s.columns(end, p) + &update;
            s.set_block(0, end, &tail);
        }
        start = end;
    }

    let mut chain_matrix = ComplexMatrix::zeros(p, p);
    let mut jordan = ComplexMatrix::zeros(p, p);
    let mut blocks = Vec::new();
    let mut eigenvalues = Vec::new();
    let mut start = 0;
    for (gi, &size) in sizes.iter().enumerate() {
        let end = start + size;
        let tc = t.submatrix(start, end, start, end);
        let lambda = if size == 1 {
            tc[(0, 0)]
        } else {
            mean(&(0..size).map(|i| tc[(i, i)]).collect::<Vec<_>>())
        };
        let nil = &tc - &ComplexMatrix::identity(size).scale(lambda);
        let (xc, lengths) = if size == 1 {
            (ComplexMatrix::identity(1), vec![1])
        } else {
            jordan_chains(&nil, tol).ok_or(BvpError::DefectiveBeyondTolerance {
                eigenvalue: groups[gi].0,
                size,
                condition: f64::INFINITY,
            })?
        };
        let cond = crate::linalg::condition_number(&xc)?;
        if !(cond <= opts.max_condition) {
            return Err(BvpError::DefectiveBeyondTolerance {
                eigenvalue: lambda,
                size,
                condition: cond,
            });
        }
        chain_matrix.set_block(start, start, &xc);
        let mut offset = start;
        for len in lengths {
            for i in 0..len {
                jordan[(offset + i, offset + i)] = lambda;
                if i + 1 < len {
                    jordan[(offset + i, offset + i + 1)] = ONE;
                }
            }
            blocks.push(JordanBlock {
                start: offset,
                size: len,
            });
            offset += len;
        }
        eigenvalues.push(FiniteEigenvalue {
            value: lambda,
            algebraic_multiplicity: size,
        });
        start = end;
    }

    let similarity = &(&sch.u * &s) * &chain_matrix;
    let cond = crate::linalg::condition_number(&similarity)?;
    if !(cond <= opts.max_condition) {
        let worst = groups
            .iter()
            .max_by_key(|(_, idx)| idx.len())
            .map(|(v, idx)| (*v, idx.len()))
            .unwrap_or((ZERO, 0));
        return Err(BvpError::DefectiveBeyondTolerance {
            eigenvalue: worst.0,
            size: worst.1,
            condition: cond,
        });
    }
    Ok(JordanData {
        similarity,
        jordan,
        blocks,
        eigenvalues,
    })
}

/// Jordan chains of a (numerically) nilpotent `n`: returns `X` whose columns
/// are the chains `[Nᴸ⁻¹w, …, N·w, w]`, longest first, and the chain lengths.
/// `None` if `n` is not nilpotent at tolerance `tol`.
fn jordan_chains(n: &ComplexMatrix, tol: f64) -> Option<(ComplexMatrix, Vec<usize>)> {
    let size = n.rows();
    let id = ComplexMatrix::identity(size);
    // kernels[k] = orthonormal basis of ker Nᵏ.
    let mut kernels = vec![ComplexMatrix::zeros(size, 0)];
    while kernels.last().unwrap().cols() < size {
        let prev = kernels.last().unwrap();
        let projector = &id - &(prev * &prev.adjoint());
        let next = null_space(&(&projector * n), tol).ok()?;
        if next.cols() <= prev.cols() || kernels.len() > size {
            return None;
        }
        kernels.push(next);
    }
    let depth = kernels.len() - 1;
    let mut tops: Vec<(Vec<C64>, usize)> = Vec::new();
    let apply = |v: &[C64], times: usize| -> Vec<C64> {
        let mut x = ComplexMatrix::column_vector(v);
        for _ in 0..times {
            x = n * &x;
        }
        x.column(0)
    };
    for k in (1..=depth).rev() {
        let existing: Vec<Vec<C64>> = tops
            .iter()
            .filter(|(_, len)| *len > k)
            .map(|(w, len)| apply(w, len - k))
            .collect();
        let new_count = kernels[k].cols() - kernels[k - 1].cols();
        if new_count < existing.len() {
            return None;
        }
        let need = new_count - existing.len();
        if need == 0 {
            continue;
        }
        let mut span = kernels[k - 1].clone();
        for e in &existing {
            span = span.hstack(&ComplexMatrix::column_vector(e)).ok()?;
        }
        let span = range_basis(&span, tol.max(1e-12)).ok()?;
        let candidates = &kernels[k] - &(&span * &(&span.adjoint() * &kernels[k]));
        let fresh = range_basis(&candidates, 1e-8).ok()?;
        if fresh.cols() < need {
            return None;
        }
        for c in 0..need {
            tops.push((fresh.column(c), k));
        }
    }
    tops.sort_by_key(|t| std::cmp::Reverse(t.1));
    let mut x = ComplexMatrix::zeros(size, size);
    let mut lengths = Vec::new();
    let mut col = 0;
    for (w, len) in &tops {
        for i in 0..*len {
            x.set_column(col + i, &apply(w, len - 1 - i));
        }
        col += len;
        lengths.push(*len);
    }
    if col != size {
        return None;
    }
    Some((x, lengths))
}
