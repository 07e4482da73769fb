//! Complex semidefinite programming layer.
//!
//! Complex Hermitian problems are embedded into real symmetric ones,
//! solved by the internal interior-point method and mapped back.  The
//! module also provides the randomized rank-1 extraction used to turn a
//! relaxed PSD solution into a beamforming vector.

mod ipm;

use crate::linalg::{eig_hermitian_desc, CMat, CVec, RMat};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use ipm::IpmStatus;

/// Default relative KKT tolerance of `solve_sdp`.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Default iteration cap of the interior-point loop.
pub const DEFAULT_MAX_ITER: usize = 200;
/// Default number of randomized rank-1 candidates.
pub const DEFAULT_CANDIDATES: usize = 100;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("matrix must be Hermitian: {0}")]
    NotHermitian(String),
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("rank-1 extraction failed: {0}")]
    RankOne(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Ge,
    Le,
    Eq,
}

/// One linear constraint `tr(A X) (sense) rhs` with Hermitian `A`.
#[derive(Debug, Clone)]
pub struct SdpConstraint {
    pub matrix: CMat,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min tr(C X)` over Hermitian PSD `X` subject to linear constraints.
#[derive(Debug, Clone)]
pub struct ComplexSdp {
    pub n: usize,
    pub objective: CMat,
    pub constraints: Vec<SdpConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Hermitian PSD matrix when optimal.
    pub x: Option<CMat>,
    pub objective: Option<f64>,
    pub iterations: usize,
}

fn hermitian_deviation(h: &CMat) -> f64 {
    let mut dev = 0.0f64;
    for i in 0..h.nrows() {
        for j in i..h.ncols() {
            dev = dev.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]`.
///
/// Eigenvalues are those of `H` with doubled multiplicity; traces double
/// and `tr(T(A) T(B)) = 2 Re tr(A B)`.
pub fn hermitian_embed(h: &CMat) -> Result<RMat, ConicError> {
    if h.nrows() != h.ncols() {
        return Err(ConicError::NotHermitian(format!(
            "matrix is {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let scale = h.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(1.0);
    let dev = hermitian_deviation(h);
    if dev > 1e-12 * scale {
        return Err(ConicError::NotHermitian(format!(
            "Hermitian deviation {dev:.3e} exceeds tolerance"
        )));
    }
    let n = h.nrows();
    let mut t = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = h[(i, j)];
            t[(i, j)] = v.re;
            t[(n + i, n + j)] = v.re;
            t[(i, n + j)] = -v.im;
            t[(n + i, j)] = v.im;
        }
    }
    Ok(t)
}

/// Inverse of the embedding with symmetrization over the two copies.
fn retract(y: &RMat) -> CMat {
    let n = y.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        Complex64::new(
            0.5 * (y[(i, j)] + y[(n + i, n + j)]),
            0.5 * (y[(n + i, j)] - y[(i, n + j)]),
        )
    })
}

/// Solves the complex SDP through the real embedding.
pub fn solve_sdp(problem: &ComplexSdp, tol: f64) -> Result<SdpSolution, ConicError> {
    if problem.n == 0 {
        return Err(ConicError::Malformed("dimension zero".into()));
    }
    if problem.constraints.is_empty() {
        return Err(ConicError::Malformed("no constraints".into()));
    }
    if problem.objective.shape() != (problem.n, problem.n) {
        return Err(ConicError::Malformed("objective dimension mismatch".into()));
    }
    for (i, con) in problem.constraints.iter().enumerate() {
        if con.matrix.shape() != (problem.n, problem.n) {
            return Err(ConicError::Malformed(format!("constraint {i} dimension mismatch")));
        }
        if !con.rhs.is_finite() {
            return Err(ConicError::Malformed(format!("constraint {i} has non-finite rhs")));
        }
    }

    let c_embed = hermitian_embed(&problem.objective)?;
    let mut rows: Vec<(RMat, f64, i8)> = Vec::with_capacity(problem.constraints.len());
    for con in &problem.constraints {
        let a = hermitian_embed(&con.matrix)?;
        let b = 2.0 * con.rhs;
        let sign = match con.sense {
            Sense::Ge => -1i8,
            Sense::Le => 1,
            Sense::Eq => 0,
        };
        let norm = a.norm();
        if norm < f64::MIN_POSITIVE {
            // Zero row: either vacuous or outright contradictory.  Any
            // normal-range norm is fine, the row is normalized below;
            // physical noise powers make legitimate rows very small.
            let violated = match con.sense {
                Sense::Ge => b > 0.0,
                Sense::Le => b < 0.0,
                Sense::Eq => b != 0.0,
            };
            if violated {
                return Ok(SdpSolution {
                    status: SdpStatus::Infeasible,
                    x: None,
                    objective: None,
                    iterations: 0,
                });
            }
            continue;
        }
        rows.push((a / norm, b / norm, sign));
    }
    if rows.is_empty() {
        return Err(ConicError::Malformed("all constraints are vacuous".into()));
    }

    // Scale the objective and right-hand side to O(1); raw data spans
    // many orders of magnitude once physical noise powers enter.
    let c_norm = c_embed.norm();
    let c_scale = if c_norm < f64::MIN_POSITIVE { 1.0 } else { c_norm };
    let b_max = rows.iter().map(|r| r.1.abs()).fold(0.0f64, f64::max);
    let x_scale = if b_max < f64::MIN_POSITIVE { 1.0 } else { b_max };

    let prob = ipm::RealSdp {
        dim: 2 * problem.n,
        c: c_embed / c_scale,
        a: rows.iter().map(|r| r.0.clone()).collect(),
        b: rows.iter().map(|r| r.1 / x_scale).collect(),
        sign: rows.iter().map(|r| r.2).collect(),
    };
    let result = ipm::solve(&prob, tol, DEFAULT_MAX_ITER);
    let status = match result.status {
        IpmStatus::Optimal => SdpStatus::Optimal,
        IpmStatus::PrimalInfeasible => SdpStatus::Infeasible,
        IpmStatus::DualInfeasible | IpmStatus::IterLimit => SdpStatus::NumericalFailure,
    };
    if status != SdpStatus::Optimal {
        return Ok(SdpSolution { status, x: None, objective: None, iterations: result.iterations });
    }
    let x = retract(&result.x) * Complex64::new(x_scale, 0.0);
    let objective = (&problem.objective * &x).trace().re;
    Ok(SdpSolution { status, x: Some(x), objective: Some(objective), iterations: result.iterations })
}

/// Outcome of the rank-1 extraction.
#[derive(Debug, Clone)]
pub struct Rank1Outcome {
    /// Feasible vector, already scaled.
    pub vector: CVec,
    /// Power scaling applied to the winning candidate.
    pub scale_sq: f64,
    /// Second-to-first eigenvalue ratio of the input matrix.
    pub eig_ratio: f64,
    /// True when the matrix was already rank-1 and no search ran.
    pub direct: bool,
}

/// Eigenvalue-ratio threshold under which a matrix counts as rank-1.
pub const RANK1_RATIO: f64 = 1e-6;

/// Extracts a design vector from a PSD matrix.
///
/// `assess` receives a candidate direction and returns the smallest
/// power scale making it feasible together with the objective after
/// that scaling, or `None` when no scaling helps.  Constraint sets
/// arising here are monotone along rays, so the minimal scale is well
/// defined.
pub fn rank1_extract<R, F>(
    x_mat: &CMat,
    mut assess: F,
    rng: &mut R,
    n_candidates: usize,
) -> Result<Rank1Outcome, ConicError>
where
    R: Rng + ?Sized,
    F: FnMut(&CVec) -> Option<(f64, f64)>,
{
    let n = x_mat.nrows();
    if n == 0 || x_mat.ncols() != n {
        return Err(ConicError::Malformed("rank-1 extraction needs a square matrix".into()));
    }
    let (vals, vecs) = eig_hermitian_desc(x_mat);
    let lam1 = vals[0];
    if lam1.is_nan() || lam1 <= 0.0 {
        return Err(ConicError::RankOne("top eigenvalue is not positive".into()));
    }
    let ratio = if n > 1 { (vals[1] / lam1).max(0.0) } else { 0.0 };
    if ratio <= RANK1_RATIO {
        let vector = vecs.column(0) * Complex64::new(lam1.sqrt(), 0.0);
        return Ok(Rank1Outcome { vector, scale_sq: 1.0, eig_ratio: ratio, direct: true });
    }

    // Randomized search: candidates x = E sqrt(Lambda) y with real
    // standard Gaussian y, each rescaled to feasibility.
    let sqrt_vals: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut best: Option<(f64, CVec, f64)> = None;
    for _ in 0..n_candidates {
        let y: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let mut cand = CVec::zeros(n);
        for j in 0..n {
            let w = Complex64::new(sqrt_vals[j] * y[j], 0.0);
            cand += vecs.column(j) * w;
        }
        if cand.norm_squared() < 1e-300 {
            continue;
        }
        if let Some((scale_sq, objective)) = assess(&cand) {
            if scale_sq.is_finite() && scale_sq >= 0.0 {
                let better = best.as_ref().map(|b| objective < b.0).unwrap_or(true);
                if better {
                    best = Some((objective, cand, scale_sq));
                }
            }
        }
    }
    match best {
        Some((_, cand, scale_sq)) => Ok(Rank1Outcome {
            vector: cand * Complex64::new(scale_sq.sqrt(), 0.0),
            scale_sq,
            eig_ratio: ratio,
            direct: false,
        }),
        None => Err(ConicError::RankOne(format!(
            "no feasible candidate among {n_candidates}"
        ))),
    }
}
