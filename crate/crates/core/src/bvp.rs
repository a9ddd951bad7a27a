//! Boundary value problems `F·Y_{k+1} = G·Y_k` (k = 0..N−1) with
//! `A1·Y_0 = B1`, `A2·Y_N = B2`.
//!
//! Every solution is `Y_k = Q_p·J_p^k·C`, so the problem reduces to the linear
//! system `K·C = L` with `K = [A1·Q_p ; A2·Q_p·J_p^N]` and `L = [B1 ; B2]`.
//! [`classify`] decides solvability from the rank of `K` and whether `L` lies
//! in its column span, and picks the matching optimal solver.

use serde::Serialize;

use crate::error::{BvpError, Result};
use crate::linalg::{
    default_rank_tol, filtered_inverse, pinv_from_svd, rank_of, solve_hermitian_spd, spectral_norm,
    svd, ComplexMatrix, COLSPAN_TOL,
};
use crate::pencil::{
    weierstrass_decompose_with, DecomposeOptions, MatrixPencil, PencilPartition, WeierstrassForm,
};

/// Default Tikhonov weight `θ` of `E = θ·I_p`.
pub const DEFAULT_THETA: f64 = 1e-5;

/// `θ` at or above which the regularizer is no longer small.
pub const LARGE_THETA: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct BoundaryValueProblem {
    pencil: MatrixPencil,
    a1: ComplexMatrix,
    b1: ComplexMatrix,
    a2: ComplexMatrix,
    b2: ComplexMatrix,
    n: usize,
}

impl BoundaryValueProblem {
    pub fn new(
        pencil: MatrixPencil,
        a1: ComplexMatrix,
        b1: ComplexMatrix,
        a2: ComplexMatrix,
        b2: ComplexMatrix,
        n: usize,
    ) -> Result<Self> {
        let m = pencil.dim();
        let check = |name: &str, a: &ComplexMatrix, b: &ComplexMatrix, bname: &str| {
            if a.cols() != m {
                return Err(BvpError::DimensionMismatch(format!(
                    "{name} has {} columns, the pencil has size {m}",
                    a.cols()
                )));
            }
            if b.shape() != (a.rows(), 1) {
                return Err(BvpError::DimensionMismatch(format!(
                    "{bname} has shape {:?}, expected ({}, 1) to match {name}",
                    b.shape(),
                    a.rows()
                )));
            }
            Ok(())
        };
        check("A1", &a1, &b1, "B1")?;
        check("A2", &a2, &b2, "B2")?;
        if n == 0 {
            return Err(BvpError::Precondition(
                "horizon N must be at least 1".into(),
            ));
        }
        for mat in [&a1, &b1, &a2, &b2] {
            if !mat.is_finite() {
                return Err(BvpError::NonFinite { row: 0, col: 0 });
            }
        }
        Ok(Self {
            pencil,
            a1,
            b1,
            a2,
            b2,
            n,
        })
    }

    pub fn pencil(&self) -> &MatrixPencil {
        &self.pencil
    }

    pub fn a1(&self) -> &ComplexMatrix {
        &self.a1
    }

    pub fn b1(&self) -> &ComplexMatrix {
        &self.b1
    }

    pub fn a2(&self) -> &ComplexMatrix {
        &self.a2
    }

    pub fn b2(&self) -> &ComplexMatrix {
        &self.b2
    }

    pub fn horizon(&self) -> usize {
        self.n
    }
}

/// `K·C = L` with `K` of size `(r1 + r2) × p`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedSystem {
    pub k: ComplexMatrix,
    pub l: ComplexMatrix,
    pub r1: usize,
    pub r2: usize,
}

impl ReducedSystem {
    pub fn new(k: ComplexMatrix, l: ComplexMatrix) -> Result<Self> {
        if l.shape() != (k.rows(), 1) {
            return Err(BvpError::DimensionMismatch(format!(
                "L has shape {:?}, K has {} rows",
                l.shape(),
                k.rows()
            )));
        }
        Ok(Self {
            r1: k.rows(),
            r2: 0,
            k,
            l,
        })
    }

    pub fn p(&self) -> usize {
        self.k.cols()
    }

    pub fn rows(&self) -> usize {
        self.k.rows()
    }
}

pub fn build_reduced_system(
    form: &WeierstrassForm,
    part: &PencilPartition,
    bvp: &BoundaryValueProblem,
) -> Result<ReducedSystem> {
    if form.p == 0 {
        return Err(BvpError::NoFiniteDynamics);
    }
    if part.qp.shape() != (bvp.pencil.dim(), form.p) {
        return Err(BvpError::DimensionMismatch(format!(
            "Qp has shape {:?}, expected ({}, {})",
            part.qp.shape(),
            bvp.pencil.dim(),
            form.p
        )));
    }
    let top = &bvp.a1 * &part.qp;
    let bottom = &(&bvp.a2 * &part.qp) * &form.jp.pow(bvp.n);
    Ok(ReducedSystem {
        k: top.vstack(&bottom)?,
        l: bvp.b1.vstack(&bvp.b2)?,
        r1: bvp.a1.rows(),
        r2: bvp.a2.rows(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Case {
    UniqueSolution,
    InfiniteSolutions,
    NoSolution,
}

/// Which solvability regime the reduced system falls in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Square and invertible.
    SquareFullRank,
    /// More conditions than unknowns, full column rank, consistent.
    TallFullRankConsistent,
    /// Fewer conditions than unknowns, full row rank.
    WideFullRank,
    /// Rank deficient and consistent.
    RankDeficientConsistent,
    /// Full column rank but inconsistent.
    TallFullRankInconsistent,
    /// Rank deficient and inconsistent.
    RankDeficientInconsistent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[serde(rename = "exact")]
    ExactSolve,
    #[serde(rename = "pinv")]
    PseudoinverseSolve,
    MinNorm,
    Regularized,
    #[serde(rename = "lsq")]
    LeastSquares,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Self::ExactSolve => "exact",
            Self::PseudoinverseSolve => "pinv",
            Self::MinNorm => "minnorm",
            Self::Regularized => "regularized",
            Self::LeastSquares => "lsq",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub rank_k: usize,
    pub p: usize,
    pub rows: usize,
    /// `rank_k = min(p, rows)`.
    pub full_rank: bool,
    /// `L ∈ colspan K`.
    pub membership: bool,
    /// `‖L − K·K†·L‖₂`.
    pub membership_residual: f64,
    pub case: Case,
    pub branch: Branch,
    pub strategy: Strategy,
}

/// Absolute rank threshold for `K`: `tol·σ_max` when a relative `tol` is
/// given, else `σ_max·max(rows, p)·ε`.
fn rank_threshold(sigma_max: f64, rows: usize, cols: usize, tol: Option<f64>) -> f64 {
    match tol {
        Some(t) => t * sigma_max,
        None => default_rank_tol(sigma_max, rows, cols),
    }
}

/// Rank of `K`, membership of `L`, and the dispatch decision. `tol` is the
/// relative rank tolerance (see [`rank_threshold`]).
pub fn classify(rs: &ReducedSystem, p: usize, tol: Option<f64>) -> Result<ConsistencyReport> {
    if rs.p() != p {
        return Err(BvpError::DimensionMismatch(format!(
            "K has {} columns, expected p = {p}",
            rs.p()
        )));
    }
    let rows = rs.rows();
    let (rank_k, membership_residual) = if rows == 0 || p == 0 {
        (0, rs.l.norm_fro())
    } else {
        let s = svd(&rs.k)?;
        let t = rank_threshold(s.sigma_max(), rows, p, tol);
        let r = s.singular_values.iter().filter(|&&x| x > t).count();
        let ur = s.u.columns(0, r);
        let proj = &ur * &(&ur.adjoint() * &rs.l);
        (r, (&rs.l - &proj).norm_fro())
    };
    let membership = membership_residual <= COLSPAN_TOL * rs.l.norm_fro().max(1.0);
    let full_rank = rank_k == p.min(rows);

    let (case, branch, strategy) = if !full_rank {
        if membership {
            (
                Case::InfiniteSolutions,
                Branch::RankDeficientConsistent,
                Strategy::PseudoinverseSolve,
            )
        } else {
            (
                Case::NoSolution,
                Branch::RankDeficientInconsistent,
                Strategy::Regularized,
            )
        }
    } else if p == rows {
        (
            Case::UniqueSolution,
            Branch::SquareFullRank,
            Strategy::ExactSolve,
        )
    } else if p < rows {
        if membership {
            (
                Case::UniqueSolution,
                Branch::TallFullRankConsistent,
                Strategy::ExactSolve,
            )
        } else {
            (
                Case::NoSolution,
                Branch::TallFullRankInconsistent,
                Strategy::LeastSquares,
            )
        }
    } else if membership {
        (
            Case::InfiniteSolutions,
            Branch::WideFullRank,
            Strategy::MinNorm,
        )
    } else {
        // Full row rank makes K onto, so this only happens when the membership
        // tolerance is tighter than the rank tolerance.
        (
            Case::NoSolution,
            Branch::RankDeficientInconsistent,
            Strategy::Regularized,
        )
    };
    Ok(ConsistencyReport {
        rank_k,
        p,
        rows,
        full_rank,
        membership,
        membership_residual,
        case,
        branch,
        strategy,
    })
}

/// `Ĉ = (K*K)⁻¹K*L`, the minimizer of `‖L − K·C‖₂`.
pub fn solve_least_squares(rs: &ReducedSystem) -> Result<ComplexMatrix> {
    let p = rs.p();
    let rank = crate::linalg::numerical_rank(&rs.k, None)?;
    if rank < p {
        return Err(BvpError::RankDeficient {
            rank,
            expected: p,
            hint: "use the regularized solver",
        });
    }
    let kh = rs.k.adjoint();
    solve_hermitian_spd(&(&kh * &rs.k), &(&kh * &rs.l)).map_err(|_| BvpError::RankDeficient {
        rank,
        expected: p,
        hint: "use the regularized solver",
    })
}

/// Tikhonov term `E` of `‖L − K·C‖² + ‖E·C‖²`.
#[derive(Clone, Debug)]
pub enum Regularizer {
    /// `E = θ·I_p`.
    Theta(f64),
    Matrix(ComplexMatrix),
}

impl Regularizer {
    pub fn matrix(&self, p: usize) -> ComplexMatrix {
        match self {
            Self::Theta(t) => ComplexMatrix::identity(p).scale_real(*t),
            Self::Matrix(e) => e.clone(),
        }
    }

    /// `‖E‖₂`.
    pub fn norm(&self) -> Result<f64> {
        match self {
            Self::Theta(t) => Ok(t.abs()),
            Self::Matrix(e) => spectral_norm(e),
        }
    }

    /// Warning text when `‖E‖₂` is not small.
    pub fn warning(&self) -> Result<Option<String>> {
        let n = self.norm()?;
        Ok((n >= LARGE_THETA)
            .then(|| format!("regularizer norm {n} is not small; the solution is strongly biased")))
    }
}

/// `Ĉ = (K*K + E*E)⁻¹K*L`, the minimizer of `‖L − K·C‖² + ‖E·C‖²`.
///
/// For `E = θ·I` this is evaluated as the filter `σ/(σ² + θ²)` on the
/// singular values of `K` above the rank threshold, so directions the
/// classification treats as null stay exactly null.
pub fn solve_regularized(rs: &ReducedSystem, reg: &Regularizer) -> Result<ComplexMatrix> {
    let p = rs.p();
    if let Regularizer::Theta(theta) = *reg {
        if rs.rows() == 0 || p == 0 {
            return Ok(ComplexMatrix::zeros(p, 1));
        }
        let s = svd(&rs.k)?;
        let tol = default_rank_tol(s.sigma_max(), rs.rows(), p);
        let rank = rank_of(&s, rs.rows(), p, None);
        if rank < p && theta.abs() <= tol {
            return Err(BvpError::RegularizerTooSmall(format!(
                "theta = {theta:e} does not exceed the rank threshold {tol:.3e} of K"
            )));
        }
        let t2 = theta * theta;
        let x = filtered_inverse(&s, rs.rows(), p, None, |sigma| sigma / (sigma * sigma + t2));
        return Ok(&x * &rs.l);
    }
    let e = reg.matrix(p);
    if e.cols() != p {
        return Err(BvpError::DimensionMismatch(format!(
            "E has {} columns, expected p = {p}",
            e.cols()
        )));
    }
    let kh = rs.k.adjoint();
    let normal = &(&kh * &rs.k) + &(&e.adjoint() * &e);
    solve_hermitian_spd(&normal, &(&kh * &rs.l)).map_err(|err| match err {
        BvpError::NotPositiveDefinite { pivot, value } => {
            BvpError::RegularizerTooSmall(format!("pivot {pivot} of K*K + E*E is {value:.3e}"))
        }
        other => other,
    })
}

/// `Ĉ = K†·L`, the minimum-norm least-squares solution.
pub fn solve_pinv(rs: &ReducedSystem) -> Result<ComplexMatrix> {
    if rs.rows() == 0 || rs.p() == 0 {
        return Ok(ComplexMatrix::zeros(rs.p(), 1));
    }
    let s = svd(&rs.k)?;
    Ok(&pinv_from_svd(&s, rs.rows(), rs.p(), None) * &rs.l)
}

/// `Ĉ = K*(KK*)⁻¹L`, the minimum-norm solution of an underdetermined system
/// with full row rank.
pub fn solve_min_norm(rs: &ReducedSystem) -> Result<ComplexMatrix> {
    let (rows, p) = (rs.rows(), rs.p());
    if p <= rows {
        return Err(BvpError::Precondition(format!(
            "minimum-norm solve needs more unknowns than conditions (p = {p}, r1 + r2 = {rows})"
        )));
    }
    let rank = crate::linalg::numerical_rank(&rs.k, None)?;
    let deficient = || BvpError::RankDeficient {
        rank,
        expected: rows,
        hint: "use the regularized or pseudoinverse solver",
    };
    if rank < rows {
        return Err(deficient());
    }
    let kh = rs.k.adjoint();
    let y = solve_hermitian_spd(&(&rs.k * &kh), &rs.l).map_err(|_| deficient())?;
    Ok(&kh * &y)
}

/// The unique `Ĉ` with `K·Ĉ = L`.
pub fn solve_exact(rs: &ReducedSystem) -> Result<ComplexMatrix> {
    let report = classify(rs, rs.p(), None)?;
    if report.case != Case::UniqueSolution {
        return Err(BvpError::Precondition(format!(
            "exact solve needs a uniquely solvable system, classified as {:?}",
            report.case
        )));
    }
    solve_pinv(rs)
}

/// `Y_k = Q_p·z_k` with `z_0 = Ĉ`, `z_{k+1} = J_p·z_k`, for `k = 0..=n`.
pub fn trajectory(
    form: &WeierstrassForm,
    part: &PencilPartition,
    c_hat: &ComplexMatrix,
    n: usize,
) -> Result<Vec<ComplexMatrix>> {
    if c_hat.shape() != (form.p, 1) {
        return Err(BvpError::DimensionMismatch(format!(
            "C has shape {:?}, expected ({}, 1)",
            c_hat.shape(),
            form.p
        )));
    }
    let mut z = c_hat.clone();
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        out.push(&part.qp * &z);
        if k < n {
            z = &form.jp * &z;
        }
    }
    Ok(out)
}

/// `max_k ‖F·Y_{k+1} − G·Y_k‖₂` over consecutive pairs.
pub fn dynamics_residual(pencil: &MatrixPencil, traj: &[ComplexMatrix]) -> f64 {
    traj.windows(2)
        .map(|w| (&(pencil.f() * &w[1]) - &(pencil.g() * &w[0])).norm_fro())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct SolutionBundle {
    pub c_hat: ComplexMatrix,
    pub strategy: Strategy,
    pub trajectory: Vec<ComplexMatrix>,
    pub dynamics_residual: f64,
    /// `(‖A1·Y_0 − B1‖₂, ‖A2·Y_N − B2‖₂)`.
    pub boundary_residual: (f64, f64),
    /// `‖L − K·Ĉ‖₂`, the change to `L` that would make `Ĉ` exact.
    pub perturbation_magnitude: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Relative rank tolerance for `K` (default: `max(rows, p)·ε`).
    pub tol: Option<f64>,
    pub theta: f64,
    /// Explicit regularizer; overrides `theta`.
    pub e: Option<ComplexMatrix>,
    pub strategy: Option<Strategy>,
    /// Canonical form to use instead of decomposing the pencil.
    pub wcf: Option<WeierstrassForm>,
    pub decompose: DecomposeOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: None,
            theta: DEFAULT_THETA,
            e: None,
            strategy: None,
            wcf: None,
            decompose: DecomposeOptions::default(),
        }
    }
}

impl SolveOptions {
    pub fn regularizer(&self) -> Regularizer {
        match &self.e {
            Some(e) => Regularizer::Matrix(e.clone()),
            None => Regularizer::Theta(self.theta),
        }
    }
}

/// Everything the pipeline computed, for reporting and certification.
#[derive(Clone, Debug)]
pub struct BvpSolution {
    pub form: WeierstrassForm,
    pub reduced: ReducedSystem,
    pub report: ConsistencyReport,
    pub bundle: SolutionBundle,
}

/// Trajectory and residual certificates for a given `Ĉ`.
pub fn assemble_bundle(
    bvp: &BoundaryValueProblem,
    form: &WeierstrassForm,
    reduced: &ReducedSystem,
    strategy: Strategy,
    c_hat: ComplexMatrix,
    warnings: Vec<String>,
) -> Result<SolutionBundle> {
    let traj = trajectory(form, &form.partition(), &c_hat, bvp.n)?;
    let r0 = (&(&bvp.a1 * &traj[0]) - &bvp.b1).norm_fro();
    let rn = (&(&bvp.a2 * &traj[bvp.n]) - &bvp.b2).norm_fro();
    let perturbation = (&reduced.l - &(&reduced.k * &c_hat)).norm_fro();
    Ok(SolutionBundle {
        dynamics_residual: dynamics_residual(&bvp.pencil, &traj),
        c_hat,
        strategy,
        trajectory: traj,
        boundary_residual: (r0, rn),
        perturbation_magnitude: perturbation,
        warnings,
    })
}

/// `Ĉ` by the given strategy, without checking that it fits the system.
pub fn solve_reduced(
    rs: &ReducedSystem,
    strategy: Strategy,
    reg: &Regularizer,
) -> Result<ComplexMatrix> {
    match strategy {
        Strategy::ExactSolve | Strategy::PseudoinverseSolve => solve_pinv(rs),
        Strategy::MinNorm => solve_min_norm(rs),
        Strategy::LeastSquares => solve_least_squares(rs),
        Strategy::Regularized => solve_regularized(rs, reg),
    }
}

/// Decomposes (or uses the supplied form), reduces, classifies and solves.
pub fn solve_bvp(bvp: &BoundaryValueProblem, options: &SolveOptions) -> Result<BvpSolution> {
    let form = match &options.wcf {
        Some(w) => w.clone(),
        None => weierstrass_decompose_with(&bvp.pencil, &options.decompose)?.0,
    };
    let part = form.partition();
    let reduced = build_reduced_system(&form, &part, bvp)?;
    let mut report = classify(&reduced, form.p, options.tol)?;
    if let Some(s) = options.strategy {
        report.strategy = s;
    }
    if report.strategy == Strategy::ExactSolve && report.case != Case::UniqueSolution {
        return Err(BvpError::Precondition(format!(
            "exact solve needs a uniquely solvable system, classified as {:?}",
            report.case
        )));
    }
    if report.strategy == Strategy::LeastSquares && report.rank_k < form.p {
        return Err(BvpError::RankDeficient {
            rank: report.rank_k,
            expected: form.p,
            hint: "use the regularized solver",
        });
    }
    let reg = options.regularizer();
    let mut warnings = Vec::new();
    if report.strategy == Strategy::Regularized {
        warnings.extend(reg.warning()?);
    }
    let c_hat = solve_reduced(&reduced, report.strategy, &reg)?;
    let bundle = assemble_bundle(bvp, &form, &reduced, report.strategy, c_hat, warnings)?;
    Ok(BvpSolution {
        form,
        reduced,
        report,
        bundle,
    })
}
