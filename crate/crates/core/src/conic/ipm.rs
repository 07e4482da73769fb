//! Homogeneous self-dual interior-point method for one PSD block plus
//! slack scalars.
//!
//! Solves  min <C, X>  s.t.  <A_i, X> + sign_i s_i = b_i,  X psd, s >= 0
//! together with its dual, using Nesterov-Todd scaling and a
//! Mehrotra-style predictor-corrector.  Inequality rows carry one slack
//! scalar each (sign -1 encodes >=, +1 encodes <=, 0 an equality).
//!
//! The homogeneous embedding tracks (x, y, z, tau, kappa); tau > 0 at
//! convergence yields an optimal pair, kappa > 0 an infeasibility
//! certificate.

use crate::linalg::{RMat, RVec};
use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

/// Real semidefinite program with one PSD block of side `dim`.
pub struct RealSdp {
    pub dim: usize,
    /// Symmetric objective matrix.
    pub c: RMat,
    /// Symmetric constraint matrices, one per row.
    pub a: Vec<RMat>,
    pub b: Vec<f64>,
    /// Slack signs per row: -1 (>=), +1 (<=), 0 (=).
    pub sign: Vec<i8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    IterLimit,
}

pub struct IpmResult {
    pub status: IpmStatus,
    /// Primal PSD block, already divided by tau.
    pub x: RMat,
    #[allow(dead_code)]
    pub objective: f64,
    pub iterations: usize,
}

fn ddot(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| p * q).sum()
}

struct State {
    x: RMat,
    xs: RVec,
    y: RVec,
    z: RMat,
    zs: RVec,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: RMat,
    dxs: RVec,
    dy: RVec,
    dz: RMat,
    dzs: RVec,
    dtau: f64,
    dkappa: f64,
}

/// Per-iteration Nesterov-Todd scaling data and the factored reduced
/// system shared by the predictor and corrector solves.
struct Scaling {
    g: RMat,
    ginv: RMat,
    /// Scaled-space eigenvalues of the PSD block.
    lambda: RVec,
    /// Cholesky factors of the current X and Z blocks.
    lx: RMat,
    lz: RMat,
    /// Scalar NT weights and scaled values.
    ws: RVec,
    lams: RVec,
    /// W c (PSD part; scalar objective parts are zero).
    wc: RMat,
    /// u_i = <A_i, W c>.
    u: RVec,
    lhs: DMatrix<f64>,
}

fn nt_scaling(prob: &RealSdp, st: &State) -> Option<Scaling> {
    let n = prob.dim;
    let lx = Cholesky::new(st.x.clone())?.l().clone_owned();
    let lz = Cholesky::new(st.z.clone())?.l().clone_owned();
    let s_inner = lx.transpose() * &st.z * &lx;
    let eig = SymmetricEigen::new(s_inner);
    let mut lam2 = eig.eigenvalues;
    for v in lam2.iter_mut() {
        if *v <= 0.0 {
            return None;
        }
    }
    // G = L_x Q lam2^{-1/4}; then G^T Z G = G^{-1} X G^{-T} = diag(sqrt(lam2)).
    let q = eig.eigenvectors;
    let mut g = &lx * &q;
    let mut ginv = q.transpose()
        * lx.solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("triangular solve after successful factorization");
    for j in 0..n {
        let s = lam2[j].powf(-0.25);
        for i in 0..n {
            g[(i, j)] *= s;
        }
        let s = lam2[j].powf(0.25);
        for i in 0..n {
            ginv[(j, i)] *= s;
        }
    }
    let lambda = lam2.map(|v| v.sqrt());

    let p = st.xs.len();
    let mut ws = RVec::zeros(p);
    let mut lams = RVec::zeros(p);
    let mut si = 0;
    for i in 0..prob.a.len() {
        if prob.sign[i] != 0 {
            ws[si] = (st.xs[si] / st.zs[si]).sqrt();
            lams[si] = (st.xs[si] * st.zs[si]).sqrt();
            si += 1;
        }
    }

    let ag: Vec<RMat> = prob.a.iter().map(|a| g.transpose() * a * &g).collect();
    let cg = g.transpose() * &prob.c * &g;
    let wc = &g * &cg * g.transpose();
    let m = prob.a.len();
    let mut u = RVec::zeros(m);
    for i in 0..m {
        u[i] = ddot(&prob.a[i], &wc);
    }
    let mut mm = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = ddot(&ag[i], &ag[j]);
            mm[(i, j)] = v;
            mm[(j, i)] = v;
        }
    }
    let mut si = 0;
    for i in 0..m {
        if prob.sign[i] != 0 {
            mm[(i, i)] += ws[si] * ws[si];
            si += 1;
        }
    }
    // Tiny ridge so duplicate rows cannot make the system singular.
    let ridge = 1e-12 * (1.0 + mm.diagonal().amax());
    for i in 0..m {
        mm[(i, i)] += ridge;
    }

    let mut lhs = DMatrix::zeros(m + 1, m + 1);
    lhs.view_mut((0, 0), (m, m)).copy_from(&mm);
    Some(Scaling { g, ginv, lambda, lx, lz, ws, lams, wc, u, lhs })
}

struct Residuals {
    rp: RVec,
    rd_psd: RMat,
    rd_s: RVec,
    rg: f64,
}

fn apply_a(prob: &RealSdp, x: &RMat, xs: &RVec) -> RVec {
    let m = prob.a.len();
    let mut out = RVec::zeros(m);
    let mut si = 0;
    for i in 0..m {
        out[i] = ddot(&prob.a[i], x);
        if prob.sign[i] != 0 {
            out[i] += f64::from(prob.sign[i]) * xs[si];
            si += 1;
        }
    }
    out
}

fn adjoint_a_psd(prob: &RealSdp, y: &RVec) -> RMat {
    let n = prob.dim;
    let mut out = RMat::zeros(n, n);
    for (ai, &yi) in prob.a.iter().zip(y.iter()) {
        out += ai * yi;
    }
    out
}

fn residuals(prob: &RealSdp, st: &State) -> Residuals {
    let m = prob.a.len();
    let ax = apply_a(prob, &st.x, &st.xs);
    let mut rp = RVec::zeros(m);
    for i in 0..m {
        rp[i] = ax[i] - prob.b[i] * st.tau;
    }
    let rd_psd = -adjoint_a_psd(prob, &st.y) - &st.z + &prob.c * st.tau;
    let p = st.xs.len();
    let mut rd_s = RVec::zeros(p);
    let mut si = 0;
    for i in 0..m {
        if prob.sign[i] != 0 {
            rd_s[si] = -f64::from(prob.sign[i]) * st.y[i] - st.zs[si];
            si += 1;
        }
    }
    let bty: f64 = prob.b.iter().zip(st.y.iter()).map(|(b, y)| b * y).sum();
    let ctx = ddot(&prob.c, &st.x);
    Residuals { rp, rd_psd, rd_s, rg: bty - ctx - st.kappa }
}

/// Solves the reduced Newton system for one right-hand side.
///
/// `t_psd` and `t_s` are the complementarity targets in scaled space;
/// `eta` weights the feasibility residuals.
#[allow(clippy::too_many_arguments)]
fn solve_direction(
    prob: &RealSdp,
    st: &State,
    sc: &Scaling,
    res: &Residuals,
    t_psd: &RMat,
    t_s: &RVec,
    rhs_tk: f64,
    eta: f64,
) -> Direction {
    let n = prob.dim;
    let m = prob.a.len();
    let p = st.xs.len();

    // R with Delta x + W Delta z = R, from the scaled targets.
    let mut rprime = RMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            rprime[(i, j)] = 2.0 * t_psd[(i, j)] / (sc.lambda[i] + sc.lambda[j]);
        }
    }
    let r_psd = &sc.g * &rprime * sc.g.transpose();
    let mut r_s = RVec::zeros(p);
    for i in 0..p {
        r_s[i] = sc.ws[i] * t_s[i] / sc.lams[i];
    }

    // W r_d pieces.
    let rd_g = sc.g.transpose() * &res.rd_psd * &sc.g;
    let w_rd = &sc.g * &rd_g * sc.g.transpose();

    // h1 = -eta rp - A(R) + eta A(W rd).
    let mut h1 = RVec::zeros(m);
    let mut si = 0;
    for i in 0..m {
        let mut v = -eta * res.rp[i] - ddot(&prob.a[i], &r_psd) + eta * ddot(&prob.a[i], &w_rd);
        if prob.sign[i] != 0 {
            let sg = f64::from(prob.sign[i]);
            v += sg * (-r_s[si] + eta * sc.ws[si] * sc.ws[si] * res.rd_s[si]);
            si += 1;
        }
        h1[i] = v;
    }
    // h2 = -eta rg + <c, R> - eta <W c, rd> + rhs_tk / tau.
    let wc_c = ddot(&sc.wc, &prob.c);
    let h2 = -eta * res.rg + ddot(&prob.c, &r_psd) - eta * ddot(&sc.wc, &res.rd_psd)
        + rhs_tk / st.tau;

    let mut lhs = sc.lhs.clone();
    for i in 0..m {
        lhs[(i, m)] = -(sc.u[i] + prob.b[i]);
        lhs[(m, i)] = prob.b[i] - sc.u[i];
    }
    lhs[(m, m)] = wc_c + st.kappa / st.tau;
    let mut rhs = RVec::zeros(m + 1);
    for i in 0..m {
        rhs[i] = h1[i];
    }
    rhs[m] = h2;
    let sol = lhs
        .lu()
        .solve(&rhs)
        .unwrap_or_else(|| RVec::zeros(m + 1));
    let dy = sol.rows(0, m).into_owned();
    let dtau = sol[m];

    // Recover the remaining blocks.
    let dz_psd = &prob.c * dtau - adjoint_a_psd(prob, &dy) + &res.rd_psd * eta;
    let mut dzs = RVec::zeros(p);
    let mut si = 0;
    for i in 0..m {
        if prob.sign[i] != 0 {
            dzs[si] = -f64::from(prob.sign[i]) * dy[i] + eta * res.rd_s[si];
            si += 1;
        }
    }
    let dzg = sc.g.transpose() * &dz_psd * &sc.g;
    let dx = &r_psd - &sc.g * &dzg * sc.g.transpose();
    let mut dxs = RVec::zeros(p);
    for i in 0..p {
        dxs[i] = r_s[i] - sc.ws[i] * sc.ws[i] * dzs[i];
    }
    let dkappa = (rhs_tk - st.kappa * dtau) / st.tau;
    Direction { dx, dxs, dy, dz: dz_psd, dzs, dtau, dkappa }
}

/// Largest eigenvalue of a symmetric matrix by shifted power iteration.
fn top_eigenvalue(s: &RMat) -> f64 {
    let n = s.nrows();
    if n == 0 {
        return 0.0;
    }
    let shift = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    if shift == 0.0 {
        return 0.0;
    }
    // A varying start vector avoids accidental orthogonality with the
    // dominant eigenvector of structured directions.
    let mut v = RVec::from_fn(n, |i, _| 1.0 + ((i + 1) as f64).sin() * 0.5);
    v /= v.norm();
    for _ in 0..60 {
        let mut w = s * &v;
        w += &v * shift;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
    }
    (v.transpose() * s * &v)[(0, 0)]
}

/// Maximum cone-preserving step along `d`, found per block and then
/// verified by factorization with backtracking.
fn step_length(st: &State, d: &Direction, sc: &Scaling) -> f64 {
    let n = st.x.nrows();
    let mut alpha: f64 = f64::INFINITY;

    for (l, delta) in [(&sc.lx, &d.dx), (&sc.lz, &d.dz)] {
        let li = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("triangular factor is invertible");
        let s = -(&li * delta * li.transpose());
        let lam = top_eigenvalue(&s);
        if lam > 1e-14 {
            alpha = alpha.min(1.0 / lam);
        }
    }
    for i in 0..st.xs.len() {
        if d.dxs[i] < 0.0 {
            alpha = alpha.min(-st.xs[i] / d.dxs[i]);
        }
        if d.dzs[i] < 0.0 {
            alpha = alpha.min(-st.zs[i] / d.dzs[i]);
        }
    }
    if d.dtau < 0.0 {
        alpha = alpha.min(-st.tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        alpha = alpha.min(-st.kappa / d.dkappa);
    }
    let mut alpha = (0.99 * alpha).min(1.0);

    // The power iteration is approximate; verify and back off until both
    // PSD blocks stay factorable.
    for _ in 0..60 {
        let xn = &st.x + &d.dx * alpha;
        let zn = &st.z + &d.dz * alpha;
        let ok = Cholesky::new(xn).is_some()
            && Cholesky::new(zn).is_some()
            && st.tau + alpha * d.dtau > 0.0
            && st.kappa + alpha * d.dkappa > 0.0
            && (0..st.xs.len())
                .all(|i| st.xs[i] + alpha * d.dxs[i] > 0.0 && st.zs[i] + alpha * d.dzs[i] > 0.0);
        if ok {
            return alpha;
        }
        alpha *= 0.8;
    }
    alpha
}

fn take_step(st: &mut State, d: &Direction, alpha: f64) {
    st.x += &d.dx * alpha;
    st.xs += &d.dxs * alpha;
    st.y += &d.dy * alpha;
    st.z += &d.dz * alpha;
    st.zs += &d.dzs * alpha;
    st.tau += alpha * d.dtau;
    st.kappa += alpha * d.dkappa;
}

pub fn solve(prob: &RealSdp, tol: f64, max_iter: usize) -> IpmResult {
    let n = prob.dim;
    let m = prob.a.len();
    let p = prob.sign.iter().filter(|s| **s != 0).count();
    let nu = (n + p) as f64;

    let mut st = State {
        x: RMat::identity(n, n),
        xs: RVec::from_element(p, 1.0),
        y: RVec::zeros(m),
        z: RMat::identity(n, n),
        zs: RVec::from_element(p, 1.0),
        tau: 1.0,
        kappa: 1.0,
    };
    let b_norm = prob.b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c_norm = ddot(&prob.c, &prob.c).sqrt();

    let finish = |st: &State, status: IpmStatus, iters: usize| {
        let x = &st.x / st.tau.max(f64::MIN_POSITIVE);
        let objective = ddot(&prob.c, &x);
        IpmResult { status, x, objective, iterations: iters }
    };

    for iter in 0..max_iter {
        // Convergence on the tau-normalized iterate.
        let res = residuals(prob, &st);
        let pres = res.rp.norm() / st.tau / (1.0 + b_norm);
        let dres = (res.rd_psd.iter().map(|v| v * v).sum::<f64>()
            + res.rd_s.iter().map(|v| v * v).sum::<f64>())
        .sqrt()
            / st.tau
            / (1.0 + c_norm);
        let ctx = ddot(&prob.c, &st.x) / st.tau;
        let bty: f64 = prob.b.iter().zip(st.y.iter()).map(|(b, y)| b * y).sum::<f64>() / st.tau;
        let relgap = (ctx - bty).abs() / (1.0 + ctx.abs() + bty.abs());
        if pres <= tol && dres <= tol && relgap <= tol {
            return finish(&st, IpmStatus::Optimal, iter);
        }

        // Infeasibility certificates.
        let bty_raw: f64 = prob.b.iter().zip(st.y.iter()).map(|(b, y)| b * y).sum();
        if bty_raw > 0.0 {
            let aty_z = (adjoint_a_psd(prob, &st.y) + &st.z).norm();
            let mut aty_s = 0.0f64;
            let mut si = 0;
            for i in 0..m {
                if prob.sign[i] != 0 {
                    aty_s += (f64::from(prob.sign[i]) * st.y[i] + st.zs[si]).powi(2);
                    si += 1;
                }
            }
            let cert = (aty_z * aty_z + aty_s).sqrt();
            if cert <= tol * bty_raw * (1.0 + c_norm) {
                return finish(&st, IpmStatus::PrimalInfeasible, iter);
            }
        }
        let ctx_raw = ddot(&prob.c, &st.x);
        if -ctx_raw > 0.0 {
            let ax = apply_a(prob, &st.x, &st.xs);
            if ax.norm() <= tol * (-ctx_raw) * (1.0 + b_norm) {
                return finish(&st, IpmStatus::DualInfeasible, iter);
            }
        }

        let Some(sc) = nt_scaling(prob, &st) else {
            return finish(&st, IpmStatus::IterLimit, iter);
        };
        let mu = (ddot(&st.x, &st.z)
            + st.xs.iter().zip(st.zs.iter()).map(|(a, b)| a * b).sum::<f64>()
            + st.tau * st.kappa)
            / (nu + 1.0);

        // Predictor: aim at zero complementarity with full residual decay.
        let mut t_psd = RMat::zeros(n, n);
        for i in 0..n {
            t_psd[(i, i)] = -sc.lambda[i] * sc.lambda[i];
        }
        let mut t_s = RVec::zeros(p);
        for i in 0..p {
            t_s[i] = -sc.lams[i] * sc.lams[i];
        }
        let aff = solve_direction(prob, &st, &sc, &res, &t_psd, &t_s, -st.tau * st.kappa, 1.0);
        let alpha_aff = step_length(&st, &aff, &sc);

        let mu_aff = {
            let xz = ddot(&(&st.x + &aff.dx * alpha_aff), &(&st.z + &aff.dz * alpha_aff));
            let ss: f64 = (0..p)
                .map(|i| (st.xs[i] + alpha_aff * aff.dxs[i]) * (st.zs[i] + alpha_aff * aff.dzs[i]))
                .sum();
            let tk = (st.tau + alpha_aff * aff.dtau) * (st.kappa + alpha_aff * aff.dkappa);
            (xz + ss + tk) / (nu + 1.0)
        };
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let eta = 1.0 - sigma;

        // Corrector with the Mehrotra second-order term.
        let dxt = &sc.ginv * &aff.dx * sc.ginv.transpose();
        let dzt = sc.g.transpose() * &aff.dz * &sc.g;
        let cross = (&dxt * &dzt + &dzt * &dxt) * 0.5;
        let mut t_psd = -cross;
        for i in 0..n {
            t_psd[(i, i)] += sigma * mu - sc.lambda[i] * sc.lambda[i];
        }
        let mut t_s = RVec::zeros(p);
        for i in 0..p {
            t_s[i] = sigma * mu - sc.lams[i] * sc.lams[i] - aff.dxs[i] * aff.dzs[i];
        }
        let rhs_tk = sigma * mu - st.tau * st.kappa - aff.dtau * aff.dkappa;
        let dir = solve_direction(prob, &st, &sc, &res, &t_psd, &t_s, rhs_tk, eta);
        let alpha = step_length(&st, &dir, &sc);
        take_step(&mut st, &dir, alpha);

        if !(st.tau.is_finite() && st.kappa.is_finite()) {
            return finish(&st, IpmStatus::IterLimit, iter + 1);
        }
    }
    finish(&st, IpmStatus::IterLimit, max_iter)
}
