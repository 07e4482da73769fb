//! Beamformer designs built from classical receive and transmit
//! structures.
//!
//! Both methods pick a base pair `(W0, {v_k0})` from channel estimates
//! alone, then scale the CP side by `sqrt(a)` and the relay side by
//! `sqrt(b)` where `(a, b)` minimize the total power under the SINR
//! constraints.  The base pair comes either from a matched-filter CP
//! beamformer with interference-cancelling relays, or from fronthaul
//! eigen-beamformers with a zero-forcing linear solve.

use crate::linalg::{eig_hermitian_desc, CMat, CVec};
use crate::metrics::{self, BeamformerSet};
use crate::netmodel::{complex_gaussian, ChannelKnowledge};
use crate::sdr_design::{finish_design, DesignError, DesignOutcome, SelectionMatrix};
use num_complex::Complex64;
use rand::Rng;
use std::time::Instant;

/// Maximum absolute residual accepted for a base solution.
pub const CORE_RESIDUAL_TOL: f64 = 1e-8;
/// Random restarts of the matched-filter quadratic solve.
const QCQP_RESTARTS: usize = 20;
/// Damped Gauss-Newton iterations per restart.
const QCQP_ITERS: usize = 100;

/// A base beamformer pair before power allocation.
#[derive(Debug, Clone)]
pub struct CoreSolution {
    pub w_blocks: Vec<CMat>,
    pub v0: Vec<CVec>,
    /// Iterations spent finding the pair.
    pub iterations: usize,
}

fn scales(knowledge: &ChannelKnowledge) -> (f64, f64) {
    let g = &knowledge.g_hat;
    let s_g = (g.norm_squared() / (g.nrows() * g.ncols()) as f64).sqrt();
    let h_total: f64 = knowledge.h_hat.iter().map(|h| h.norm_squared()).sum();
    let s_h = (h_total / (knowledge.h_hat.len() * knowledge.h_hat[0].len()) as f64).sqrt();
    (s_g.max(f64::MIN_POSITIVE), s_h.max(f64::MIN_POSITIVE))
}

fn check_core_dims(knowledge: &ChannelKnowledge) -> Result<(), DesignError> {
    let k = knowledge.k_users();
    let unknowns = knowledge.n * knowledge.l * knowledge.l;
    if unknowns < k * k {
        return Err(DesignError::Infeasible);
    }
    Ok(())
}

/// Matched-filter CP beamformers with interference-cancelling relays.
///
/// Finds `w0` with `h_hat_k^H W G_hat^H G_hat W^H h_hat_l = delta[k-l]`
/// by damped Gauss-Newton on the stacked residuals, then sets
/// `v_k0 = G_hat W^H h_hat_k`.
pub fn solve_mrczf_core<R: Rng + ?Sized>(
    knowledge: &ChannelKnowledge,
    rng: &mut R,
) -> Result<CoreSolution, DesignError> {
    check_core_dims(knowledge)?;
    let k_users = knowledge.k_users();
    let sel = SelectionMatrix::new(knowledge.n, knowledge.l);
    let dim = sel.dim();
    let (s_g, s_h) = scales(knowledge);

    // Normalized channels keep the quadratic system near unit scale.
    let g_n = &knowledge.g_hat * Complex64::new(1.0 / s_g, 0.0);
    let h_n: Vec<CVec> = knowledge
        .h_hat
        .iter()
        .map(|h| h * Complex64::new(1.0 / s_h, 0.0))
        .collect();
    let gram = g_n.adjoint() * &g_n;

    // One quadratic form per ordered user pair; the (l, k) form is the
    // adjoint of (k, l), so rows cover k together with pairs k < l.
    let mut forms = Vec::with_capacity(k_users * k_users);
    for k in 0..k_users {
        for l in 0..k_users {
            forms.push(sel.compress(&gram, &(&h_n[l] * h_n[k].adjoint())));
        }
    }
    let form = |k: usize, l: usize| &forms[k * k_users + l];

    let residuals = |w: &CVec| -> Vec<f64> {
        let mut r = Vec::with_capacity(k_users * k_users);
        for k in 0..k_users {
            r.push((w.adjoint() * form(k, k) * w)[(0, 0)].re - 1.0);
        }
        for k in 0..k_users {
            for l in (k + 1)..k_users {
                let f = (w.adjoint() * form(k, l) * w)[(0, 0)];
                r.push(f.re);
                r.push(f.im);
            }
        }
        r
    };
    let max_abs = |r: &[f64]| r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let norm_sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let n_eq = k_users * k_users;
    let mut total_iters = 0;
    for _ in 0..QCQP_RESTARTS {
        let mut w = CVec::from_fn(dim, |_, _| complex_gaussian(rng, 1.0));
        // Start with the diagonal targets met on average.
        let diag_mean: f64 = (0..k_users)
            .map(|k| (w.adjoint() * form(k, k) * &w)[(0, 0)].re)
            .sum::<f64>()
            / k_users as f64;
        if diag_mean > 0.0 {
            w *= Complex64::new(1.0 / diag_mean.sqrt(), 0.0);
        }

        let mut r = residuals(&w);
        let mut lambda = 1e-3;
        for _ in 0..QCQP_ITERS {
            total_iters += 1;
            if max_abs(&r) <= CORE_RESIDUAL_TOL {
                let w0 = &w * Complex64::new(1.0 / (s_g * s_h), 0.0);
                let w_blocks = sel.expand(&w0);
                let w_full = crate::linalg::block_diag(&w_blocks);
                let v0: Vec<CVec> = knowledge
                    .h_hat
                    .iter()
                    .map(|h| &knowledge.g_hat * w_full.adjoint() * h)
                    .collect();
                return Ok(CoreSolution { w_blocks, v0, iterations: total_iters });
            }

            // Jacobian of the real residuals in the real and imaginary
            // parts of w.
            let mut jac = nalgebra::DMatrix::<f64>::zeros(n_eq, 2 * dim);
            let mut row = 0;
            let fill = |k: usize, l: usize, jac: &mut nalgebra::DMatrix<f64>, row: usize, both: bool| {
                let u = form(k, l) * &w;
                let t = form(k, l).adjoint() * &w;
                for j in 0..dim {
                    let da = u[j] + t[j].conj();
                    let db = Complex64::i() * (t[j].conj() - u[j]);
                    jac[(row, j)] = da.re;
                    jac[(row, dim + j)] = db.re;
                    if both {
                        jac[(row + 1, j)] = da.im;
                        jac[(row + 1, dim + j)] = db.im;
                    }
                }
            };
            for k in 0..k_users {
                fill(k, k, &mut jac, row, false);
                row += 1;
            }
            for k in 0..k_users {
                for l in (k + 1)..k_users {
                    fill(k, l, &mut jac, row, true);
                    row += 2;
                }
            }

            let rv = nalgebra::DVector::from_vec(r.clone());
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * &rv;
            let mut accepted = false;
            for _ in 0..12 {
                let mut lhs = jtj.clone();
                for i in 0..lhs.nrows() {
                    lhs[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
                }
                let Some(chol) = lhs.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let step = chol.solve(&(-&jtr));
                let cand = CVec::from_fn(dim, |j, _| {
                    w[j] + Complex64::new(step[j], step[dim + j])
                });
                let r_cand = residuals(&cand);
                if norm_sq(&r_cand) < norm_sq(&r) {
                    w = cand;
                    r = r_cand;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                break;
            }
        }
    }
    Err(DesignError::Infeasible)
}

/// Fronthaul eigen-beamformers with a zero-forcing relay solve.
///
/// Sets `v_k0` to the k-th eigenvector of the fronthaul SNR matrix and
/// solves the linear zero-forcing system for `w0` by minimum-norm
/// least squares.
pub fn solve_svdzf_core(knowledge: &ChannelKnowledge) -> Result<CoreSolution, DesignError> {
    check_core_dims(knowledge)?;
    let k_users = knowledge.k_users();
    let m = knowledge.m_antennas();
    if m < k_users {
        return Err(DesignError::Infeasible);
    }
    let sel = SelectionMatrix::new(knowledge.n, knowledge.l);
    let dim = sel.dim();
    let (s_g, s_h) = scales(knowledge);

    let g0 = (&knowledge.g_hat * knowledge.g_hat.adjoint())
        * Complex64::new(1.0 / knowledge.sigma_rrh_sq, 0.0);
    let (_, evecs) = eig_hermitian_desc(&crate::linalg::hermitize(&g0));
    let v0: Vec<CVec> = (0..k_users).map(|k| evecs.column(k).clone_owned()).collect();

    // Normalized coefficient matrix of the K^2 x NL^2 linear system.
    let g_n = &knowledge.g_hat * Complex64::new(1.0 / s_g, 0.0);
    let mut sys = CMat::zeros(k_users * k_users, dim);
    let mut rhs = CVec::zeros(k_users * k_users);
    for k in 0..k_users {
        for (l, v0l) in v0.iter().enumerate() {
            let x = g_n.adjoint() * v0l;
            let row = k * k_users + l;
            for j in 0..dim {
                sys[(row, j)] = knowledge.h_hat[k][sel.global_row(j)].conj()
                    * Complex64::new(1.0 / s_h, 0.0)
                    * x[sel.global_col(j)];
            }
            if k == l {
                rhs[row] = Complex64::new(1.0, 0.0);
            }
        }
    }

    // Minimum-norm solution through the small Hermitian Gram matrix.
    let gram = &sys * sys.adjoint();
    let (vals, vecs) = eig_hermitian_desc(&crate::linalg::hermitize(&gram));
    let cutoff = vals[0].max(0.0) * 1e-12;
    let mut y = CVec::zeros(k_users * k_users);
    for i in 0..vals.len() {
        if vals[i] > cutoff {
            let coef = (vecs.column(i).adjoint() * &rhs)[(0, 0)] / vals[i];
            y += vecs.column(i) * coef;
        }
    }
    let w_n = sys.adjoint() * y;

    let resid = &sys * &w_n - &rhs;
    let max_resid = resid.iter().fold(0.0_f64, |mx, v| mx.max(v.norm()));
    if max_resid > CORE_RESIDUAL_TOL {
        return Err(DesignError::Infeasible);
    }
    let w0 = &w_n * Complex64::new(1.0 / (s_g * s_h), 0.0);
    Ok(CoreSolution { w_blocks: sel.expand(&w0), v0, iterations: 0 })
}

/// Coefficients of the two-variable power allocation.
#[derive(Debug, Clone)]
pub struct PowerSplitCoeffs {
    /// Per user: signal, interference, relay-noise and MS-noise terms.
    pub c: Vec<[f64; 4]>,
    pub d5: f64,
    pub d6: f64,
    pub d7: f64,
    /// Per user: the two constraint coefficients, valid when feasible.
    pub dk: Vec<[f64; 2]>,
    pub feasible: bool,
}

/// Computes the power-split coefficients for a base pair.
pub fn split_coeffs(
    knowledge: &ChannelKnowledge,
    w_blocks: &[CMat],
    v0: &[CVec],
    thresholds: &[f64],
) -> Result<PowerSplitCoeffs, DesignError> {
    let k_users = knowledge.k_users();
    if v0.len() != k_users || thresholds.len() != k_users {
        return Err(DesignError::Numerical("base pair and thresholds must cover every user".into()));
    }
    let beams = BeamformerSet { v: v0.to_vec(), w_blocks: w_blocks.to_vec() };
    metrics::check_dims(knowledge, &beams)?;
    let w = beams.w_full();
    let whw = w.adjoint() * &w;
    let s1 = knowledge.sigma1_diag();
    let trace_s1: f64 = (0..whw.nrows()).map(|i| whw[(i, i)].re * s1[i]).sum();

    let d5: f64 = v0.iter().map(|v| v.norm_squared()).sum();
    let mut d6: f64 = 0.0;
    for v in v0 {
        let gv = knowledge.g_hat.adjoint() * v;
        d6 += (gv.adjoint() * &whw * &gv)[(0, 0)].re;
    }
    d6 += trace_s1 * d5;
    let d7 = knowledge.sigma_rrh_sq * whw.trace().re;

    let c_mats: Vec<CMat> = v0.iter().map(|v| metrics::c_matrix(knowledge, v)).collect();
    let mut c = Vec::with_capacity(k_users);
    let mut dk = Vec::with_capacity(k_users);
    let mut feasible = true;
    for (k, &gamma) in thresholds.iter().enumerate() {
        let d_mat = metrics::d_matrix(knowledge, k);
        let row = knowledge.h_hat[k].adjoint() * &w * knowledge.g_hat.adjoint();
        let c1 = (&row * &v0[k])[(0, 0)].norm_sqr();
        let mut c2 = 0.0;
        for cm in &c_mats {
            c2 += (&d_mat * &w * cm * w.adjoint()).trace().re;
        }
        let c3 = knowledge.sigma_rrh_sq * (&d_mat * &w * w.adjoint()).trace().re;
        let c4 = knowledge.sigma_ms_sq;
        c.push([c1, c2, c3, c4]);
        let den = (1.0 + gamma) * c1 - gamma * c2;
        if den > 0.0 {
            dk.push([gamma * c3 / den, gamma * c4 / den]);
        } else {
            dk.push([f64::INFINITY, f64::INFINITY]);
            feasible = false;
        }
    }
    Ok(PowerSplitCoeffs { c, d5, d6, d7, dk, feasible })
}

/// Optimal two-variable power allocation.
#[derive(Debug, Clone, Copy)]
pub struct PowerSplit {
    pub a: f64,
    pub b: f64,
    pub total_power: f64,
}

/// Minimizes `a d5 + a b d6 + b d7` subject to
/// `a >= max_k (d_k1 + d_k2 / b)` over `b > 0`.
///
/// On the interval where constraint `k` dominates, the objective along
/// the active constraint is a single-variable function with an
/// explicit stationary point; the minimum over users of the clamped
/// stationary values and interval endpoints is exact.
fn optimize_two_variable(dk: &[[f64; 2]], d5: f64, d6: f64, d7: f64) -> PowerSplit {
    let k_users = dk.len();
    let eval = |b: f64| -> f64 {
        let a = dk
            .iter()
            .map(|d| d[0] + d[1] / b)
            .fold(f64::NEG_INFINITY, f64::max);
        a * d5 + a * b * d6 + b * d7
    };
    let mut best: Option<(f64, f64)> = None;
    for k in 0..k_users {
        // Interval of b where curve k lies on top of every other.
        let mut lo: f64 = 0.0;
        let mut hi = f64::INFINITY;
        for l in 0..k_users {
            if l == k {
                continue;
            }
            let alpha = dk[k][0] - dk[l][0];
            let beta = dk[l][1] - dk[k][1];
            if alpha > 0.0 {
                if beta > 0.0 {
                    lo = lo.max(beta / alpha);
                }
            } else if alpha == 0.0 {
                if beta > 0.0 {
                    lo = f64::INFINITY;
                }
            } else if beta < 0.0 {
                hi = hi.min(beta / alpha);
            } else {
                hi = -1.0;
            }
        }
        if lo > hi {
            continue;
        }
        let slope = dk[k][0] * d6 + d7;
        let b_star = if slope > 0.0 {
            (dk[k][1] * d5 / slope).sqrt()
        } else {
            f64::INFINITY
        };
        let mut candidates = vec![b_star.clamp(lo, hi)];
        if lo > 0.0 && lo.is_finite() {
            candidates.push(lo);
        }
        if hi.is_finite() && hi > 0.0 {
            candidates.push(hi);
        }
        for b in candidates {
            if !(b > 0.0 && b.is_finite()) {
                continue;
            }
            let p = eval(b);
            if p.is_finite() && best.map(|(bp, _)| p < bp).unwrap_or(true) {
                best = Some((p, b));
            }
        }
    }
    let (p, b) = best.expect("at least one dominance interval is nonempty");
    let a = dk.iter().map(|d| d[0] + d[1] / b).fold(f64::NEG_INFINITY, f64::max);
    PowerSplit { a, b, total_power: p }
}

/// Finds the optimal `(a, b)` scaling for a base pair.
pub fn power_split(
    knowledge: &ChannelKnowledge,
    w_blocks: &[CMat],
    v0: &[CVec],
    thresholds: &[f64],
) -> Result<PowerSplit, DesignError> {
    let coeffs = split_coeffs(knowledge, w_blocks, v0, thresholds)?;
    if !coeffs.feasible {
        return Err(DesignError::Infeasible);
    }
    Ok(optimize_two_variable(&coeffs.dk, coeffs.d5, coeffs.d6, coeffs.d7))
}

fn classic_outcome<F>(
    knowledge: &ChannelKnowledge,
    thresholds: &[f64],
    core: F,
) -> DesignOutcome
where
    F: FnOnce() -> Result<CoreSolution, DesignError>,
{
    let started = Instant::now();
    let core = match core() {
        Ok(c) => c,
        Err(e) => {
            return DesignOutcome::failed(!e.is_infeasible(), 0, started, Vec::new())
        }
    };
    let split = match power_split(knowledge, &core.w_blocks, &core.v0, thresholds) {
        Ok(s) => s,
        Err(e) => {
            return DesignOutcome::failed(!e.is_infeasible(), core.iterations, started, Vec::new())
        }
    };
    let base = BeamformerSet { v: core.v0, w_blocks: core.w_blocks };
    let beams = base.scaled(split.a, split.b);
    finish_design(knowledge, beams, thresholds, core.iterations, started, Vec::new(), Vec::new())
}

/// Matched-filter and zero-forcing design with optimal power split.
pub fn mrc_zf<R: Rng + ?Sized>(
    knowledge: &ChannelKnowledge,
    thresholds: &[f64],
    rng: &mut R,
) -> DesignOutcome {
    classic_outcome(knowledge, thresholds, || solve_mrczf_core(knowledge, rng))
}

/// Eigen-beamforming and zero-forcing design with optimal power split.
pub fn svd_zf(knowledge: &ChannelKnowledge, thresholds: &[f64]) -> DesignOutcome {
    classic_outcome(knowledge, thresholds, || solve_svdzf_core(knowledge))
}
