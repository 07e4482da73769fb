//! Semidefinite-relaxation beamformer designs.
//!
//! With the CP beamformers fixed, the relay weights live in a single
//! vector `w0` of the block-diagonal entries of `W`, and the SINR
//! constraints become linear in the lifted matrix `w0 w0^H`; the same
//! holds for the CP side with `W` fixed.  This module assembles both
//! lifted subproblems, solves them through the conic layer, and runs
//! the initialization, alternating-optimization and total-SNR-max
//! algorithms on top.

use crate::conic::{
    self, rank1_extract, solve_sdp, ComplexSdp, ConicError, SdpConstraint, SdpStatus, Sense,
    DEFAULT_CANDIDATES, DEFAULT_TOL,
};
use crate::linalg::{eig_hermitian_desc, hermitize, CMat, CVec};
use crate::metrics::{self, BeamformerSet, MetricsError, SecondOrderTerms};
use crate::netmodel::ChannelKnowledge;
use num_complex::Complex64;
use rand::Rng;
use std::time::Instant;
use thiserror::Error;

/// Relative SINR acceptance tolerance for finished designs.
pub const SINR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("subproblem infeasible")]
    Infeasible,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl DesignError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, DesignError::Infeasible)
    }
}

/// Index bookkeeping between the free relay entries `w0` and `vec(W)`.
///
/// Entry `j = n L^2 + c L + r` of `w0` holds block `n` entry `(r, c)`,
/// which sits at row `n L + r`, column `n L + c` of the full `W`.
#[derive(Debug, Clone)]
pub struct SelectionMatrix {
    pub n: usize,
    pub l: usize,
}

impl SelectionMatrix {
    pub fn new(n: usize, l: usize) -> SelectionMatrix {
        SelectionMatrix { n, l }
    }

    /// Length of `w0`.
    pub fn dim(&self) -> usize {
        self.n * self.l * self.l
    }

    /// Row of `vec(W)` hit by entry `j` of `w0`.
    fn vec_index(&self, j: usize) -> usize {
        self.global_col(j) * self.n * self.l + self.global_row(j)
    }

    /// Row of `W` holding entry `j` of `w0`.
    pub fn global_row(&self, j: usize) -> usize {
        let within = j % (self.l * self.l);
        (j / (self.l * self.l)) * self.l + within % self.l
    }

    /// Column of `W` holding entry `j` of `w0`.
    pub fn global_col(&self, j: usize) -> usize {
        let within = j % (self.l * self.l);
        (j / (self.l * self.l)) * self.l + within / self.l
    }

    /// The literal 0/1 selection matrix with `vec(W) = U w0`.
    pub fn matrix(&self) -> CMat {
        let nl = self.n * self.l;
        let mut u = CMat::zeros(nl * nl, self.dim());
        for j in 0..self.dim() {
            u[(self.vec_index(j), j)] = Complex64::new(1.0, 0.0);
        }
        u
    }

    /// Rebuilds the diagonal blocks of `W` from `w0`.
    pub fn expand(&self, w0: &CVec) -> Vec<CMat> {
        let l = self.l;
        (0..self.n)
            .map(|n| CMat::from_fn(l, l, |r, c| w0[n * l * l + c * l + r]))
            .collect()
    }

    /// Stacks the diagonal blocks of `W` into `w0`.
    pub fn collapse(&self, blocks: &[CMat]) -> CVec {
        let l = self.l;
        CVec::from_fn(self.dim(), |j, _| {
            let within = j % (l * l);
            blocks[j / (l * l)][(within % l, within / l)]
        })
    }

    /// `U^H (P^T kron Q) U` without forming the Kronecker product.
    ///
    /// For any block-diagonal `W = expand(w0)` this satisfies
    /// `w0^H compress(P, Q) w0 = tr(W^H Q W P)`.
    pub fn compress(&self, p: &CMat, q: &CMat) -> CMat {
        let d = self.dim();
        CMat::from_fn(d, d, |j, jp| {
            p[(self.global_col(jp), self.global_col(j))]
                * q[(self.global_row(j), self.global_row(jp))]
        })
    }
}

/// A lifted subproblem plus the constant part of its power objective.
#[derive(Debug, Clone)]
pub struct AssembledSdp {
    pub sdp: ComplexSdp,
    pub constant: f64,
}

fn validate_thresholds(knowledge: &ChannelKnowledge, thresholds: &[f64]) -> Result<(), DesignError> {
    if thresholds.len() != knowledge.k_users() {
        return Err(DesignError::Numerical(format!(
            "expected {} thresholds, got {}",
            knowledge.k_users(),
            thresholds.len()
        )));
    }
    if thresholds.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(DesignError::Numerical("thresholds must be positive".into()));
    }
    Ok(())
}

/// Builds the relay-side subproblem for fixed CP beamformers.
pub fn assemble_p1(
    knowledge: &ChannelKnowledge,
    v: &[CVec],
    thresholds: &[f64],
) -> Result<AssembledSdp, DesignError> {
    validate_thresholds(knowledge, thresholds)?;
    let m = knowledge.m_antennas();
    if v.len() != knowledge.k_users() || v.iter().any(|vk| vk.len() != m) {
        return Err(DesignError::Numerical("CP beamformer dimensions do not match".into()));
    }
    let sel = SelectionMatrix::new(knowledge.n, knowledge.l);
    let nl = knowledge.n * knowledge.l;

    let c_mats: Vec<CMat> = v.iter().map(|vk| metrics::c_matrix(knowledge, vk)).collect();
    let mut c_sum = CMat::zeros(nl, nl);
    for c in &c_mats {
        c_sum += c;
    }
    let eye = CMat::identity(nl, nl);

    let mut objective = sel.compress(&c_sum, &eye);
    for i in 0..sel.dim() {
        objective[(i, i)] += Complex64::new(knowledge.sigma_rrh_sq, 0.0);
    }

    let mut constraints = Vec::with_capacity(knowledge.k_users());
    for (k, &gamma) in thresholds.iter().enumerate() {
        let d_k = metrics::d_matrix(knowledge, k);
        let g_k = knowledge.g_hat.adjoint() * &v[k];
        let t_k = sel.compress(&(&g_k * g_k.adjoint()), &(&knowledge.h_hat[k] * knowledge.h_hat[k].adjoint()));
        let f_sum = sel.compress(&c_sum, &d_k);
        let e_k = sel.compress(&eye, &d_k);
        let phi = t_k * Complex64::new(1.0 + gamma, 0.0)
            - f_sum * Complex64::new(gamma, 0.0)
            - e_k * Complex64::new(gamma * knowledge.sigma_rrh_sq, 0.0);
        constraints.push(SdpConstraint {
            matrix: hermitize(&phi),
            sense: Sense::Ge,
            rhs: gamma * knowledge.sigma_ms_sq,
        });
    }
    Ok(AssembledSdp {
        sdp: ComplexSdp { n: sel.dim(), objective: hermitize(&objective), constraints },
        constant: v.iter().map(|vk| vk.norm_squared()).sum(),
    })
}

/// Builds the CP-side subproblem for a fixed relay matrix, as one
/// block-diagonal variable stacking all per-user matrices.
pub fn assemble_p2(
    knowledge: &ChannelKnowledge,
    w_blocks: &[CMat],
    thresholds: &[f64],
) -> Result<AssembledSdp, DesignError> {
    validate_thresholds(knowledge, thresholds)?;
    let beams_probe = BeamformerSet {
        v: vec![CVec::zeros(knowledge.m_antennas()); knowledge.k_users()],
        w_blocks: w_blocks.to_vec(),
    };
    metrics::check_dims(knowledge, &beams_probe)?;
    let k_users = knowledge.k_users();
    let m = knowledge.m_antennas();
    let w = beams_probe.w_full();
    let terms = SecondOrderTerms::compute(knowledge, &beams_probe)?;
    let s1 = knowledge.sigma1_diag();
    let gw = &knowledge.g_hat * w.adjoint();

    let dim = k_users * m;
    let mut objective = CMat::zeros(dim, dim);
    for k in 0..k_users {
        objective.view_mut((k * m, k * m), (m, m)).copy_from(&terms.tau0);
    }

    let mut constraints = Vec::with_capacity(k_users);
    let whw = w.adjoint() * &w;
    let amp = knowledge.sigma_rrh_sq * whw.trace().re;
    for (k, &gamma) in thresholds.iter().enumerate() {
        let d_k = &terms.d[k];
        let u = &gw * &knowledge.h_hat[k];
        let a_k = &u * u.adjoint();
        let wdw = w.adjoint() * d_k * &w;
        let trace_sig: f64 = (0..wdw.nrows()).map(|i| (wdw[(i, i)].re) * s1[i]).sum();
        let mut b_k = &gw * d_k * gw.adjoint();
        for i in 0..m {
            b_k[(i, i)] += Complex64::new(trace_sig, 0.0);
        }
        let b_rhs = knowledge.sigma_rrh_sq * (d_k * &w * w.adjoint()).trace().re
            + knowledge.sigma_ms_sq;

        let mut big = CMat::zeros(dim, dim);
        for l in 0..k_users {
            let mut block = &b_k * Complex64::new(-gamma, 0.0);
            if l == k {
                block += &a_k * Complex64::new(1.0 + gamma, 0.0);
            }
            big.view_mut((l * m, l * m), (m, m)).copy_from(&block);
        }
        constraints.push(SdpConstraint {
            matrix: hermitize(&big),
            sense: Sense::Ge,
            rhs: gamma * b_rhs,
        });
    }
    Ok(AssembledSdp {
        sdp: ComplexSdp { n: dim, objective: hermitize(&objective), constraints },
        constant: amp,
    })
}

/// Result of one relay-side solve.
#[derive(Debug, Clone)]
pub struct AccessSolve {
    pub w_blocks: Vec<CMat>,
    pub eig_ratio: f64,
    pub sdp_iterations: usize,
}

fn quad(m: &CMat, x: &CVec) -> f64 {
    (x.adjoint() * m * x)[(0, 0)].re
}

/// Solves the relay-side subproblem and extracts a usable `W`.
pub fn solve_access<R: Rng + ?Sized>(
    knowledge: &ChannelKnowledge,
    v: &[CVec],
    thresholds: &[f64],
    rng: &mut R,
) -> Result<AccessSolve, DesignError> {
    let assembled = assemble_p1(knowledge, v, thresholds)?;
    let sol = solve_sdp(&assembled.sdp, DEFAULT_TOL)?;
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => return Err(DesignError::Infeasible),
        SdpStatus::NumericalFailure => {
            return Err(DesignError::Numerical("relay-side solve hit the iteration cap".into()))
        }
    }
    let x = sol.x.expect("optimal solution carries X");
    let phis: Vec<&CMat> = assembled.sdp.constraints.iter().map(|c| &c.matrix).collect();
    let rhs: Vec<f64> = assembled.sdp.constraints.iter().map(|c| c.rhs).collect();
    let objective = &assembled.sdp.objective;

    let assess = |cand: &CVec| -> Option<(f64, f64)> {
        let mut scale: f64 = 0.0;
        for (phi, r) in phis.iter().zip(&rhs) {
            let q = quad(phi, cand);
            if q <= 0.0 {
                return None;
            }
            scale = scale.max(r / q);
        }
        Some((scale, scale * quad(objective, cand)))
    };
    let out = rank1_extract(&x, assess, rng, DEFAULT_CANDIDATES)?;
    let mut w0 = out.vector;
    if out.direct {
        // The eigenvector route carries solver tolerance; nudge onto the
        // feasible side of every constraint.
        let mut scale: f64 = 1.0;
        for (phi, r) in phis.iter().zip(&rhs) {
            let q = quad(phi, &w0);
            if q <= 0.0 {
                return Err(DesignError::Numerical(
                    "rank-1 relay vector violates a constraint irreparably".into(),
                ));
            }
            scale = scale.max(r / q);
        }
        w0 *= Complex64::new(scale.sqrt(), 0.0);
    }
    let sel = SelectionMatrix::new(knowledge.n, knowledge.l);
    let w_blocks = sel.expand(&w0);

    let beams = BeamformerSet { v: v.to_vec(), w_blocks: w_blocks.clone() };
    for (k, &gamma) in thresholds.iter().enumerate() {
        let s = metrics::sinr(knowledge, &beams, k)?;
        if s < gamma * (1.0 - SINR_TOLERANCE) {
            return Err(DesignError::Numerical(format!(
                "relay design misses threshold for user {k}: {s} < {gamma}"
            )));
        }
    }
    Ok(AccessSolve { w_blocks, eig_ratio: out.eig_ratio, sdp_iterations: sol.iterations })
}

/// Result of one CP-side solve.
#[derive(Debug, Clone)]
pub struct FronthaulSolve {
    pub v: Vec<CVec>,
    pub eig_ratios: Vec<f64>,
    pub sdp_iterations: usize,
}

/// Solves the CP-side subproblem and extracts per-user beamformers.
pub fn solve_fronthaul<R: Rng + ?Sized>(
    knowledge: &ChannelKnowledge,
    w_blocks: &[CMat],
    thresholds: &[f64],
    rng: &mut R,
) -> Result<FronthaulSolve, DesignError> {
    let assembled = assemble_p2(knowledge, w_blocks, thresholds)?;
    let sol = solve_sdp(&assembled.sdp, DEFAULT_TOL)?;
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => return Err(DesignError::Infeasible),
        SdpStatus::NumericalFailure => {
            return Err(DesignError::Numerical("CP-side solve hit the iteration cap".into()))
        }
    }
    let x = sol.x.expect("optimal solution carries X");
    let k_users = knowledge.k_users();
    let m = knowledge.m_antennas();

    // Per-user blocks with their eigenvalue decompositions.
    let mut ratios = Vec::with_capacity(k_users);
    let mut decomps = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let block = hermitize(&x.view((k * m, k * m), (m, m)).clone_owned());
        let (vals, vecs) = eig_hermitian_desc(&block);
        if vals[0].is_nan() || vals[0] <= 0.0 {
            return Err(DesignError::Numerical(format!(
                "CP-side block {k} has no positive eigenvalue"
            )));
        }
        ratios.push(if m > 1 { (vals[1] / vals[0]).max(0.0) } else { 0.0 });
        decomps.push((vals, vecs));
    }

    let phis: Vec<&CMat> = assembled.sdp.constraints.iter().map(|c| &c.matrix).collect();
    let rhs: Vec<f64> = assembled.sdp.constraints.iter().map(|c| c.rhs).collect();
    let stack = |vs: &[CVec]| -> CVec {
        let mut full = CVec::zeros(k_users * m);
        for (k, vk) in vs.iter().enumerate() {
            full.rows_mut(k * m, m).copy_from(vk);
        }
        full
    };
    // Joint feasibility scale over all users; constraints are quadratic
    // along the shared ray.
    let min_scale = |vs: &[CVec]| -> Option<f64> {
        let full = stack(vs);
        let mut scale: f64 = 0.0;
        for (phi, r) in phis.iter().zip(&rhs) {
            let q = quad(phi, &full);
            if q <= 0.0 {
                return None;
            }
            scale = scale.max(r / q);
        }
        Some(scale)
    };
    let objective_quad = |vs: &[CVec]| -> f64 {
        let full = stack(vs);
        quad(&assembled.sdp.objective, &full)
    };

    let all_rank1 = ratios.iter().all(|r| *r <= conic::RANK1_RATIO);
    let chosen: Vec<CVec> = if all_rank1 {
        let vs: Vec<CVec> = decomps
            .iter()
            .map(|(vals, vecs)| vecs.column(0) * Complex64::new(vals[0].sqrt(), 0.0))
            .collect();
        let scale = min_scale(&vs)
            .ok_or_else(|| {
                DesignError::Numerical("rank-1 CP vectors violate a constraint irreparably".into())
            })?
            .max(1.0);
        vs.iter().map(|v| v * Complex64::new(scale.sqrt(), 0.0)).collect()
    } else {
        let mut best: Option<(f64, Vec<CVec>)> = None;
        for _ in 0..DEFAULT_CANDIDATES {
            let cand: Vec<CVec> = decomps
                .iter()
                .map(|(vals, vecs)| {
                    let mut v = CVec::zeros(m);
                    for j in 0..m {
                        let y: f64 = rng.sample(rand_distr::StandardNormal);
                        v += vecs.column(j) * Complex64::new(vals[j].max(0.0).sqrt() * y, 0.0);
                    }
                    v
                })
                .collect();
            if let Some(scale) = min_scale(&cand) {
                let obj = scale * objective_quad(&cand);
                if best.as_ref().map(|b| obj < b.0).unwrap_or(true) {
                    let scaled =
                        cand.iter().map(|v| v * Complex64::new(scale.sqrt(), 0.0)).collect();
                    best = Some((obj, scaled));
                }
            }
        }
        best.ok_or_else(|| {
            DesignError::Numerical(format!(
                "no feasible CP candidate among {DEFAULT_CANDIDATES}"
            ))
        })?
        .1
    };

    let beams = BeamformerSet { v: chosen.clone(), w_blocks: w_blocks.to_vec() };
    for (k, &gamma) in thresholds.iter().enumerate() {
        let s = metrics::sinr(knowledge, &beams, k)?;
        if s < gamma * (1.0 - SINR_TOLERANCE) {
            return Err(DesignError::Numerical(format!(
                "CP design misses threshold for user {k}: {s} < {gamma}"
            )));
        }
    }
    Ok(FronthaulSolve { v: chosen, eig_ratios: ratios, sdp_iterations: sol.iterations })
}

/// Eigen-beamforming start: top eigenvectors of the fronthaul SNR
/// matrix, each carrying an equal share of `p_cp`.
pub fn snr_eigen_init(knowledge: &ChannelKnowledge, p_cp: f64) -> Result<Vec<CVec>, DesignError> {
    let k_users = knowledge.k_users();
    let m = knowledge.m_antennas();
    if m < k_users {
        return Err(DesignError::Numerical(format!(
            "need at least {k_users} CP antennas, have {m}"
        )));
    }
    if !(p_cp > 0.0 && p_cp.is_finite()) {
        return Err(DesignError::Numerical("CP power must be positive".into()));
    }
    let g0 = (&knowledge.g_hat * knowledge.g_hat.adjoint())
        * Complex64::new(1.0 / knowledge.sigma_rrh_sq, 0.0);
    let (_, vecs) = eig_hermitian_desc(&hermitize(&g0));
    let amp = Complex64::new((p_cp / k_users as f64).sqrt(), 0.0);
    Ok((0..k_users).map(|k| vecs.column(k) * amp).collect())
}

/// Growth factor and iteration cap shared by the power-search loops.
const P_CP_INIT: f64 = 1.0;
const P_CP_GROWTH: f64 = 1.05;
const SEARCH_ITERS: usize = 100;

/// Outcome of the initialization search.
pub struct InitOutcome {
    pub v: Vec<CVec>,
    pub w_blocks: Vec<CMat>,
    pub p_cp: f64,
    pub eig_ratio: f64,
    pub growth_steps: usize,
}

/// Grows the CP power until the relay-side subproblem first succeeds.
pub fn algorithm0<R: Rng + ?Sized>(
    knowledge: &ChannelKnowledge,
    thresholds: &[f64],
    rng: &mut R,
) -> Result<InitOutcome, DesignError> {
    validate_thresholds(knowledge, thresholds)?;
    let mut p_cp = P_CP_INIT;
    for t in 0..SEARCH_ITERS {
        let v = snr_eigen_init(knowledge, p_cp)?;
        match solve_access(knowledge, &v, thresholds, rng) {
            Ok(acc) => {
                return Ok(InitOutcome {
                    v,
                    w_blocks: acc.w_blocks,
                    p_cp,
                    eig_ratio: acc.eig_ratio,
                    growth_steps: t,
                })
            }
            Err(DesignError::Infeasible) | Err(DesignError::Numerical(_)) => {}
            Err(other) => return Err(other),
        }
        p_cp *= P_CP_GROWTH;
    }
    Err(DesignError::Infeasible)
}

/// Everything a caller needs to judge one finished design attempt.
#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub feasible: bool,
    /// Set when the attempt failed for numerical reasons rather than
    /// plain infeasibility.
    pub numerical_failure: bool,
    pub beams: Option<BeamformerSet>,
    pub total_power: Option<f64>,
    pub per_user_sinr: Option<Vec<f64>>,
    pub iterations: usize,
    pub wall_clock: f64,
    /// Eigenvalue ratios from every rank-1 extraction performed.
    pub rank1_stats: Vec<f64>,
    /// Total power after each outer iteration.
    pub power_trace: Vec<f64>,
}

impl DesignOutcome {
    pub(crate) fn failed(
        numerical: bool,
        iterations: usize,
        started: Instant,
        rank1: Vec<f64>,
    ) -> Self {
        DesignOutcome {
            feasible: false,
            numerical_failure: numerical,
            beams: None,
            total_power: None,
            per_user_sinr: None,
            iterations,
            wall_clock: started.elapsed().as_secs_f64(),
            rank1_stats: rank1,
            power_trace: Vec::new(),
        }
    }
}

pub(crate) fn finish_design(
    knowledge: &ChannelKnowledge,
    beams: BeamformerSet,
    thresholds: &[f64],
    iterations: usize,
    started: Instant,
    rank1: Vec<f64>,
    power_trace: Vec<f64>,
) -> DesignOutcome {
    let total = match metrics::total_power(knowledge, &beams) {
        Ok(p) => p,
        Err(_) => return DesignOutcome::failed(true, iterations, started, rank1),
    };
    let mut sinrs = Vec::with_capacity(knowledge.k_users());
    for k in 0..knowledge.k_users() {
        match metrics::sinr(knowledge, &beams, k) {
            Ok(s) => sinrs.push(s),
            Err(_) => return DesignOutcome::failed(true, iterations, started, rank1),
        }
    }
    let ok = sinrs
        .iter()
        .zip(thresholds)
        .all(|(s, g)| *s >= g * (1.0 - SINR_TOLERANCE));
    if !ok {
        return DesignOutcome::failed(true, iterations, started, rank1);
    }
    DesignOutcome {
        feasible: true,
        numerical_failure: false,
        beams: Some(beams),
        total_power: Some(total),
        per_user_sinr: Some(sinrs),
        iterations,
        wall_clock: started.elapsed().as_secs_f64(),
        rank1_stats: rank1,
        power_trace,
    }
}

/// Convergence threshold of the alternating loop.
const AO_ETA: f64 = 1e-3;
const AO_ITERS: usize = 100;

/// Alternating optimization: CP side and relay side in turn, from the
/// initialization search's starting point.
pub fn alternating_optimization<R: Rng + ?Sized>(
    knowledge: &ChannelKnowledge,
    thresholds: &[f64],
    rng: &mut R,
) -> DesignOutcome {
    let started = Instant::now();
    let mut rank1 = Vec::new();
    let init = match algorithm0(knowledge, thresholds, rng) {
        Ok(i) => i,
        Err(e) => return DesignOutcome::failed(!e.is_infeasible(), 0, started, rank1),
    };
    rank1.push(init.eig_ratio);

    let mut beams = BeamformerSet { v: init.v, w_blocks: init.w_blocks };
    let mut power = match metrics::total_power(knowledge, &beams) {
        Ok(p) => p,
        Err(_) => return DesignOutcome::failed(true, 0, started, rank1),
    };
    let mut trace = vec![power];
    let mut iterations = 0;
    for t in 1..=AO_ITERS {
        iterations = t;
        let front = match solve_fronthaul(knowledge, &beams.w_blocks, thresholds, rng) {
            Ok(f) => f,
            Err(_) => break,
        };
        let access = match solve_access(knowledge, &front.v, thresholds, rng) {
            Ok(a) => a,
            Err(_) => break,
        };
        let candidate = BeamformerSet { v: front.v, w_blocks: access.w_blocks };
        let p_new = match metrics::total_power(knowledge, &candidate) {
            Ok(p) => p,
            Err(_) => break,
        };
        if p_new > power * (1.0 + 1e-9) {
            // The exact subproblems cannot increase the power; a rise
            // signals solver noise, so keep the previous design.
            break;
        }
        rank1.extend(front.eig_ratios);
        rank1.push(access.eig_ratio);
        beams = candidate;
        let previous = power;
        power = p_new;
        trace.push(power);
        if (previous - power).abs() < AO_ETA * power {
            break;
        }
    }
    finish_design(knowledge, beams, thresholds, iterations, started, rank1, trace)
}

/// Total-SNR-max search: grow the CP power, design the relay side for
/// the eigen-beamformers, and stop at the first power upturn.
pub fn total_snr_max<R: Rng + ?Sized>(
    knowledge: &ChannelKnowledge,
    thresholds: &[f64],
    rng: &mut R,
) -> DesignOutcome {
    let started = Instant::now();
    if let Err(e) = validate_thresholds(knowledge, thresholds) {
        return DesignOutcome::failed(!e.is_infeasible(), 0, started, Vec::new());
    }
    let mut rank1 = Vec::new();
    let mut p_cp = P_CP_INIT;
    let mut trace: Vec<f64> = Vec::new();
    let mut previous: Option<(f64, BeamformerSet)> = None;
    let mut best: Option<(f64, BeamformerSet, usize)> = None;
    for t in 0..SEARCH_ITERS {
        let v = match snr_eigen_init(knowledge, p_cp) {
            Ok(v) => v,
            Err(_) => return DesignOutcome::failed(true, t, started, rank1),
        };
        let current = match solve_access(knowledge, &v, thresholds, rng) {
            Ok(acc) => {
                rank1.push(acc.eig_ratio);
                let beams = BeamformerSet { v, w_blocks: acc.w_blocks };
                metrics::total_power(knowledge, &beams).ok().map(|p| (p, beams))
            }
            Err(_) => None,
        };
        let p_now = current.as_ref().map(|c| c.0).unwrap_or(0.0);
        trace.push(p_now);
        if let Some((p, beams)) = &current {
            let better = best.as_ref().map(|b| *p < b.0).unwrap_or(true);
            if better {
                best = Some((*p, beams.clone(), t));
            }
        }
        if let (Some((p_prev, beams_prev)), true) = (&previous, p_now > 0.0) {
            if *p_prev > 0.0 && p_now > *p_prev {
                // First upturn: the previous design is the answer.
                return finish_design(
                    knowledge,
                    beams_prev.clone(),
                    thresholds,
                    t,
                    started,
                    rank1,
                    trace,
                );
            }
        }
        previous = current;
        p_cp *= P_CP_GROWTH;
    }
    // No upturn within the cap: fall back to the cheapest feasible
    // design seen, if any.
    match best {
        Some((_, beams, t)) => {
            finish_design(knowledge, beams, thresholds, t, started, rank1, trace)
        }
        None => DesignOutcome::failed(false, SEARCH_ITERS, started, rank1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::complex_gaussian;
    use approx::assert_relative_eq;
    use num_complex::Complex64 as C;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_knowledge<R: Rng>(
        k: usize,
        n: usize,
        l: usize,
        m: usize,
        var: f64,
        rng: &mut R,
    ) -> ChannelKnowledge {
        let nl = n * l;
        ChannelKnowledge {
            g_hat: CMat::from_fn(m, nl, |_, _| complex_gaussian(rng, 1.0)),
            h_hat: (0..k).map(|_| CVec::from_fn(nl, |_, _| complex_gaussian(rng, 1.0))).collect(),
            sigma1_sq: (0..n).map(|_| var * (0.5 + rng.gen::<f64>())).collect(),
            sigma2_sq: (0..k)
                .map(|_| (0..n).map(|_| var * (0.5 + rng.gen::<f64>())).collect())
                .collect(),
            sigma_rrh_sq: 0.05,
            sigma_ms_sq: 0.05,
            n,
            l,
        }
    }

    fn random_blocks<R: Rng>(n: usize, l: usize, rng: &mut R) -> Vec<CMat> {
        (0..n).map(|_| CMat::from_fn(l, l, |_, _| complex_gaussian(rng, 1.0))).collect()
    }

    #[test]
    fn selection_matrix_small_cases() {
        let sel = SelectionMatrix::new(1, 3);
        assert_eq!(sel.matrix(), CMat::identity(9, 9));

        let sel = SelectionMatrix::new(2, 1);
        let u = sel.matrix();
        assert_eq!(u.shape(), (4, 2));
        assert_eq!(u[(0, 0)], C::new(1.0, 0.0));
        assert_eq!(u[(3, 1)], C::new(1.0, 0.0));
        assert_eq!(u.iter().map(|v| v.norm()).sum::<f64>(), 2.0);
    }

    #[test]
    fn selection_matrix_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let sel = SelectionMatrix::new(3, 2);
        let blocks = random_blocks(3, 2, &mut rng);
        let w0 = sel.collapse(&blocks);
        let back = sel.expand(&w0);
        for (a, b) in blocks.iter().zip(&back) {
            assert_eq!(a, b);
        }
        // U w0 reproduces vec(W) and U^H U = I.
        let u = sel.matrix();
        let w_full = crate::linalg::block_diag(&blocks);
        let vecw = crate::linalg::vec_c(&w_full);
        assert!((&u * &w0 - &vecw).norm() < 1e-14);
        assert!((u.adjoint() * &u - CMat::identity(sel.dim(), sel.dim())).norm() < 1e-14);
    }

    #[test]
    fn compress_matches_full_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let sel = SelectionMatrix::new(2, 2);
        let nl = 4;
        for _ in 0..20 {
            let p = {
                let a = CMat::from_fn(nl, nl, |_, _| complex_gaussian(&mut rng, 1.0));
                hermitize(&(&a + a.adjoint()))
            };
            let q = {
                let a = CMat::from_fn(nl, nl, |_, _| complex_gaussian(&mut rng, 1.0));
                hermitize(&(&a + a.adjoint()))
            };
            let blocks = random_blocks(2, 2, &mut rng);
            let w0 = sel.collapse(&blocks);
            let w_full = crate::linalg::block_diag(&blocks);

            let direct = (&w_full.adjoint() * &q * &w_full * &p).trace().re;
            let via = (w0.adjoint() * sel.compress(&p, &q) * &w0)[(0, 0)].re;
            assert_relative_eq!(via, direct, max_relative = 1e-10);

            // Same through the materialized U and the explicit Kronecker
            // product.
            let u = sel.matrix();
            let kron = crate::linalg::kron_c(&p.transpose(), &q);
            let compressed = u.adjoint() * &kron * &u;
            assert!((&compressed - sel.compress(&p, &q)).norm() < 1e-10 * compressed.norm());
        }
    }

    #[test]
    fn p1_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let (k, n, l, m) = (2, 2, 2, 3);
        let kn = random_knowledge(k, n, l, m, 0.02, &mut rng);
        let v: Vec<CVec> =
            (0..k).map(|_| CVec::from_fn(m, |_, _| complex_gaussian(&mut rng, 1.0))).collect();
        let thresholds = vec![1.5, 2.5];
        let assembled = assemble_p1(&kn, &v, &thresholds).unwrap();
        let sel = SelectionMatrix::new(n, l);

        for _ in 0..10 {
            let blocks = random_blocks(n, l, &mut rng);
            let w0 = sel.collapse(&blocks);
            let beams = BeamformerSet { v: v.clone(), w_blocks: blocks };

            // Objective quadratic form plus constant equals the power.
            let obj = (w0.adjoint() * &assembled.sdp.objective * &w0)[(0, 0)].re
                + assembled.constant;
            let power = metrics::total_power(&kn, &beams).unwrap();
            assert_relative_eq!(obj, power, max_relative = 1e-10);

            // Constraint forms encode the SINR inequalities exactly.
            for (kk, con) in assembled.sdp.constraints.iter().enumerate() {
                let gamma = thresholds[kk];
                let lhs = (w0.adjoint() * &con.matrix * &w0)[(0, 0)].re;
                let s = metrics::sinr(&kn, &beams, kk).unwrap();
                // lhs >= rhs iff sinr >= gamma.
                let num_form = {
                    let w = beams.w_full();
                    let row = kn.h_hat[kk].adjoint() * &w * kn.g_hat.adjoint();
                    let x1 = (&row * &beams.v[kk])[(0, 0)].norm_sqr();
                    let mut inter = 0.0;
                    for vv in &beams.v {
                        let c = metrics::c_matrix(&kn, vv);
                        inter +=
                            (&metrics::d_matrix(&kn, kk) * &w * &c * w.adjoint()).trace().re;
                    }
                    let amp = kn.sigma_rrh_sq
                        * (&metrics::d_matrix(&kn, kk) * &w * w.adjoint()).trace().re;
                    (1.0 + gamma) * x1 - gamma * inter - gamma * amp
                };
                assert_relative_eq!(lhs, num_form, max_relative = 1e-9);
                assert_eq!(lhs >= con.rhs, s >= gamma);
            }
        }
    }

    #[test]
    fn p2_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let (k, n, l, m) = (2, 2, 2, 3);
        let kn = random_knowledge(k, n, l, m, 0.02, &mut rng);
        let blocks = random_blocks(n, l, &mut rng);
        let thresholds = vec![2.0, 3.0];
        let assembled = assemble_p2(&kn, &blocks, &thresholds).unwrap();

        for _ in 0..10 {
            let v: Vec<CVec> =
                (0..k).map(|_| CVec::from_fn(m, |_, _| complex_gaussian(&mut rng, 1.0))).collect();
            let mut full = CVec::zeros(k * m);
            for (kk, vv) in v.iter().enumerate() {
                full.rows_mut(kk * m, m).copy_from(vv);
            }
            let beams = BeamformerSet { v: v.clone(), w_blocks: blocks.clone() };

            let obj =
                (full.adjoint() * &assembled.sdp.objective * &full)[(0, 0)].re + assembled.constant;
            let power = metrics::total_power(&kn, &beams).unwrap();
            assert_relative_eq!(obj, power, max_relative = 1e-10);

            for (kk, con) in assembled.sdp.constraints.iter().enumerate() {
                let gamma = thresholds[kk];
                let lhs = (full.adjoint() * &con.matrix * &full)[(0, 0)].re;
                let s = metrics::sinr(&kn, &beams, kk).unwrap();
                assert_eq!(lhs >= con.rhs, s >= gamma, "mismatch at user {kk}");
            }
        }
    }

    #[test]
    fn p1_objective_constant_at_zero_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let kn = random_knowledge(2, 1, 2, 2, 0.01, &mut rng);
        let v: Vec<CVec> =
            (0..2).map(|_| CVec::from_fn(2, |_, _| complex_gaussian(&mut rng, 1.0))).collect();
        let assembled = assemble_p1(&kn, &v, &[1.0, 1.0]).unwrap();
        let expect: f64 = v.iter().map(|x| x.norm_squared()).sum();
        assert_relative_eq!(assembled.constant, expect, max_relative = 1e-12);
    }

    #[test]
    fn solve_access_hits_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let kn = random_knowledge(1, 1, 2, 2, 0.01, &mut rng);
        let v = vec![CVec::from_fn(2, |_, _| complex_gaussian(&mut rng, 1.0))];
        let gamma = 1.0;
        let acc = solve_access(&kn, &v, &[gamma], &mut rng).unwrap();
        let beams = BeamformerSet { v, w_blocks: acc.w_blocks };
        let s = metrics::sinr(&kn, &beams, 0).unwrap();
        assert!(s >= gamma * (1.0 - 1e-6));
        // Single-user minimum-power designs sit on the constraint.
        assert!(s <= gamma * 1.01, "constraint should be active, sinr = {s}");
        assert!(acc.eig_ratio <= 1e-3);
    }

    #[test]
    fn solve_access_infeasible_above_ceiling() {
        let kn = ChannelKnowledge {
            g_hat: CMat::from_element(1, 1, C::new(2.0, 0.0)),
            h_hat: vec![CVec::from_element(1, C::new(1.0, 0.0))],
            sigma1_sq: vec![0.01],
            sigma2_sq: vec![vec![0.01]],
            sigma_rrh_sq: 0.1,
            sigma_ms_sq: 0.1,
            n: 1,
            l: 1,
        };
        let gmax = crate::bound::max_threshold(&kn, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let v = vec![CVec::from_element(1, C::new(1.0, 0.0))];
        assert!(solve_access(&kn, &v, &[gmax * 1.5], &mut rng).is_err());
    }

    #[test]
    fn fronthaul_scalar_user_rank1() {
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        for _ in 0..5 {
            let kn = random_knowledge(1, 1, 2, 2, 0.01, &mut rng);
            let blocks = vec![CMat::identity(2, 2)];
            let front = solve_fronthaul(&kn, &blocks, &[1.0], &mut rng).unwrap();
            assert!(front.eig_ratios[0] <= 1e-3, "ratio {}", front.eig_ratios[0]);
            let beams = BeamformerSet { v: front.v, w_blocks: blocks };
            assert!(metrics::sinr(&kn, &beams, 0).unwrap() >= 1.0 - 1e-6);
        }
    }

    #[test]
    fn eigen_init_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let kn = random_knowledge(2, 2, 2, 4, 0.01, &mut rng);
        let p_cp = 3.0;
        let v = snr_eigen_init(&kn, p_cp).unwrap();
        assert_eq!(v.len(), 2);
        for vk in &v {
            assert_relative_eq!(vk.norm_squared(), p_cp / 2.0, max_relative = 1e-10);
        }
        let cross = (v[0].adjoint() * &v[1])[(0, 0)].norm();
        assert!(cross < 1e-10);
        let total: f64 = v.iter().map(|x| x.norm_squared()).sum();
        assert_relative_eq!(total, p_cp, max_relative = 1e-10);

        // No orthonormal frame of the same power beats the eigenvector
        // choice on total SNR.
        let g0 = (&kn.g_hat * kn.g_hat.adjoint()) * C::new(1.0 / kn.sigma_rrh_sq, 0.0);
        let snr_of = |frame: &[CVec]| -> f64 {
            frame.iter().map(|f| (f.adjoint() * &g0 * f)[(0, 0)].re).sum()
        };
        let best = snr_of(&v);
        for _ in 0..200 {
            let a = CMat::from_fn(4, 2, |_, _| complex_gaussian(&mut rng, 1.0));
            let qr = a.qr();
            let q = qr.q();
            let frame: Vec<CVec> = (0..2)
                .map(|i| q.column(i) * C::new((p_cp / 2.0).sqrt(), 0.0))
                .collect();
            assert!(snr_of(&frame) <= best * (1.0 + 1e-9));
        }
    }

    #[test]
    fn algorithm0_constants_and_easy_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        assert_eq!(P_CP_INIT, 1.0);
        assert_eq!(P_CP_GROWTH, 1.05);
        assert_eq!(SEARCH_ITERS, 100);
        // A mild threshold is reachable once the power has grown enough.
        let kn = random_knowledge(1, 1, 1, 1, 0.001, &mut rng);
        let init = algorithm0(&kn, &[0.5], &mut rng).unwrap();
        assert!(init.growth_steps < SEARCH_ITERS);
        assert_relative_eq!(
            init.p_cp,
            P_CP_GROWTH.powi(init.growth_steps as i32),
            max_relative = 1e-12
        );
        let beams = BeamformerSet { v: init.v, w_blocks: init.w_blocks };
        assert!(metrics::sinr(&kn, &beams, 0).unwrap() >= 0.5 * (1.0 - 1e-6));
    }

    #[test]
    fn algorithm0_rejects_violated_necessary_condition() {
        let kn = ChannelKnowledge {
            g_hat: CMat::from_element(1, 1, C::new(1.0, 0.0)),
            h_hat: vec![CVec::from_element(1, C::new(1.0, 0.0))],
            sigma1_sq: vec![0.5],
            sigma2_sq: vec![vec![0.5]],
            sigma_rrh_sq: 0.1,
            sigma_ms_sq: 0.1,
            n: 1,
            l: 1,
        };
        // Ceiling for these variances; anything above must fail.
        let gmax = crate::bound::max_threshold(&kn, 0);
        assert!(gmax.is_finite());
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let res = algorithm0(&kn, &[gmax * 2.0], &mut rng);
        assert!(res.is_err());
    }

    #[test]
    fn ao_power_trace_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let mut seen = 0;
        for _ in 0..6 {
            let kn = random_knowledge(2, 2, 2, 3, 0.005, &mut rng);
            let out = alternating_optimization(&kn, &[1.5, 1.5], &mut rng);
            if !out.feasible {
                continue;
            }
            seen += 1;
            for w in out.power_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-6), "trace increased: {:?}", out.power_trace);
            }
            assert!(out.iterations <= AO_ITERS);
            let sinrs = out.per_user_sinr.unwrap();
            for s in sinrs {
                assert!(s >= 1.5 * (1.0 - 1e-6));
            }
        }
        assert!(seen >= 3, "only {seen} feasible designs");
    }

    #[test]
    fn tsm_returns_feasible_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let mut seen = 0;
        for _ in 0..5 {
            let kn = random_knowledge(2, 2, 2, 3, 0.005, &mut rng);
            let out = total_snr_max(&kn, &[1.5, 1.5], &mut rng);
            if !out.feasible {
                continue;
            }
            seen += 1;
            let sinrs = out.per_user_sinr.unwrap();
            for s in sinrs {
                assert!(s >= 1.5 * (1.0 - 1e-6));
            }
            assert!(!out.power_trace.is_empty());
        }
        assert!(seen >= 3, "only {seen} feasible designs");
    }

    #[test]
    fn ao_eta_constant() {
        assert_eq!(AO_ETA, 1e-3);
        assert_eq!(AO_ITERS, 100);
    }
}
