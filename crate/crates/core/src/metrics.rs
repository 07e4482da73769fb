//! Design evaluation: SINR, total mean power, rate and power breakdown.
//!
//! All quantities are mean values over the channel error and noise
//! statistics, evaluated in closed form from the channel knowledge.  A
//! sampling oracle for the SINR is included so the closed form can be
//! validated against the defining expectations.

use crate::linalg::{block_diag, CMat, CVec};
use crate::netmodel::{complex_gaussian, ChannelKnowledge};
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// CP beamformers and block-diagonal RRH beamforming matrix.
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    /// `K` vectors of length `M`.
    pub v: Vec<CVec>,
    /// `N` blocks of `L x L`; the implied `W` is block diagonal.
    pub w_blocks: Vec<CMat>,
}

impl BeamformerSet {
    /// Assembles the dense `NL x NL` block-diagonal `W`.
    pub fn w_full(&self) -> CMat {
        block_diag(&self.w_blocks)
    }

    /// Scales every CP beamformer by `sqrt(a)` and `W` by `sqrt(b)`.
    pub fn scaled(&self, a: f64, b: f64) -> BeamformerSet {
        let sa = Complex64::new(a.sqrt(), 0.0);
        let sb = Complex64::new(b.sqrt(), 0.0);
        BeamformerSet {
            v: self.v.iter().map(|v| v * sa).collect(),
            w_blocks: self.w_blocks.iter().map(|w| w * sb).collect(),
        }
    }
}

/// Second-order quantities entering the SINR and power expressions.
pub struct SecondOrderTerms {
    /// `D_k = h_hat_k h_hat_k^H + Sigma_{2,k}`, one per user.
    pub d: Vec<CMat>,
    /// `C_k = G_hat^H v_k v_k^H G_hat + ||v_k||^2 Sigma_1`, one per user.
    pub c: Vec<CMat>,
    /// Diagonal `Sigma_1`.
    pub sigma1: CMat,
    /// Diagonal `Sigma_{2,k}`, one per user.
    pub sigma2: Vec<CMat>,
    /// `tau_0 = I + G_hat W^H W G_hat^H + tr(W^H W Sigma_1) I`.
    pub tau0: CMat,
}

fn real_diag(v: &nalgebra::DVector<f64>) -> CMat {
    CMat::from_fn(v.len(), v.len(), |i, j| {
        if i == j {
            Complex64::new(v[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// `D_k` for one user.
pub fn d_matrix(knowledge: &ChannelKnowledge, k: usize) -> CMat {
    let h = &knowledge.h_hat[k];
    let mut d = h * h.adjoint();
    let s2 = knowledge.sigma2_diag(k);
    for i in 0..d.nrows() {
        d[(i, i)] += Complex64::new(s2[i], 0.0);
    }
    d
}

/// `C` for one CP beamformer.
pub fn c_matrix(knowledge: &ChannelKnowledge, v: &CVec) -> CMat {
    let g = knowledge.g_hat.adjoint() * v;
    let mut c = &g * g.adjoint();
    let p = v.norm_squared();
    let s1 = knowledge.sigma1_diag();
    for i in 0..c.nrows() {
        c[(i, i)] += Complex64::new(p * s1[i], 0.0);
    }
    c
}

impl SecondOrderTerms {
    pub fn compute(
        knowledge: &ChannelKnowledge,
        beams: &BeamformerSet,
    ) -> Result<SecondOrderTerms, MetricsError> {
        check_dims(knowledge, beams)?;
        let k_users = knowledge.k_users();
        let w = beams.w_full();
        let whw = w.adjoint() * &w;
        let s1 = knowledge.sigma1_diag();
        let trace_s1: f64 = (0..whw.nrows()).map(|i| whw[(i, i)].re * s1[i]).sum();
        let gw = &knowledge.g_hat * &whw * knowledge.g_hat.adjoint();
        let m = knowledge.m_antennas();
        let mut tau0 = gw;
        for i in 0..m {
            tau0[(i, i)] += Complex64::new(1.0 + trace_s1, 0.0);
        }
        Ok(SecondOrderTerms {
            d: (0..k_users).map(|k| d_matrix(knowledge, k)).collect(),
            c: beams.v.iter().map(|v| c_matrix(knowledge, v)).collect(),
            sigma1: real_diag(&s1),
            sigma2: (0..k_users).map(|k| real_diag(&knowledge.sigma2_diag(k))).collect(),
            tau0,
        })
    }
}

/// Per-user split of the total power.
#[derive(Debug, Clone)]
pub struct PerUserPowers {
    /// Fronthaul (CP) power per user, watts.
    pub p_cp: Vec<f64>,
    /// Access (RRH) power per user, watts.
    pub p_rrh: Vec<f64>,
    /// Equal per-user share of the amplified RRH noise power, watts.
    pub p_amp_noise: Vec<f64>,
}

pub fn check_dims(knowledge: &ChannelKnowledge, beams: &BeamformerSet) -> Result<(), MetricsError> {
    let (n, l, m) = (knowledge.n, knowledge.l, knowledge.m_antennas());
    if beams.v.len() != knowledge.k_users() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{} CP beamformers for {} users",
            beams.v.len(),
            knowledge.k_users()
        )));
    }
    if let Some(v) = beams.v.iter().find(|v| v.len() != m) {
        return Err(MetricsError::DimensionMismatch(format!(
            "CP beamformer length {} does not match M = {m}",
            v.len()
        )));
    }
    if beams.w_blocks.len() != n {
        return Err(MetricsError::DimensionMismatch(format!(
            "{} RRH blocks for N = {n}",
            beams.w_blocks.len()
        )));
    }
    if let Some(b) = beams.w_blocks.iter().find(|b| b.shape() != (l, l)) {
        return Err(MetricsError::DimensionMismatch(format!(
            "RRH block shape {:?} does not match L = {l}",
            b.shape()
        )));
    }
    Ok(())
}

/// Mean SINR of user `k` for the given design.
pub fn sinr(
    knowledge: &ChannelKnowledge,
    beams: &BeamformerSet,
    k: usize,
) -> Result<f64, MetricsError> {
    check_dims(knowledge, beams)?;
    let w = beams.w_full();
    let hk = &knowledge.h_hat[k];
    let dk = d_matrix(knowledge, k);

    // Desired power |h_hat_k^H W G_hat^H v_k|^2.
    let row = hk.adjoint() * &w * knowledge.g_hat.adjoint();
    let num = (&row * &beams.v[k])[(0, 0)].norm_sqr();

    let mut interference = 0.0;
    for v in &beams.v {
        let c = c_matrix(knowledge, v);
        interference += (&dk * &w * &c * w.adjoint()).trace().re;
    }
    let amp_noise = knowledge.sigma_rrh_sq * (&dk * &w * w.adjoint()).trace().re;
    let denom = interference - num + amp_noise + knowledge.sigma_ms_sq;
    Ok(num / denom)
}

/// Total mean transmit power of the design, in watts.
pub fn total_power(
    knowledge: &ChannelKnowledge,
    beams: &BeamformerSet,
) -> Result<f64, MetricsError> {
    check_dims(knowledge, beams)?;
    let w = beams.w_full();
    let whw = w.adjoint() * &w;
    let s1 = knowledge.sigma1_diag();
    let trace_s1: f64 = (0..whw.nrows()).map(|i| whw[(i, i)].re * s1[i]).sum();
    let gwg = &knowledge.g_hat * &whw * knowledge.g_hat.adjoint();

    let mut p = knowledge.sigma_rrh_sq * whw.trace().re;
    for v in &beams.v {
        let vhv = v.norm_squared();
        p += vhv * (1.0 + trace_s1) + (v.adjoint() * &gwg * v)[(0, 0)].re;
    }
    Ok(p)
}

/// Achievable rate for a given SINR, in bits per channel use.
pub fn achievable_rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// Per-user power decomposition; the three parts sum to `total_power`.
pub fn power_breakdown(
    knowledge: &ChannelKnowledge,
    beams: &BeamformerSet,
) -> Result<PerUserPowers, MetricsError> {
    check_dims(knowledge, beams)?;
    let w = beams.w_full();
    let whw = w.adjoint() * &w;
    let s1 = knowledge.sigma1_diag();
    let trace_s1: f64 = (0..whw.nrows()).map(|i| whw[(i, i)].re * s1[i]).sum();
    let gwg = &knowledge.g_hat * &whw * knowledge.g_hat.adjoint();
    let k_users = knowledge.k_users();
    let amp_share = knowledge.sigma_rrh_sq * whw.trace().re / k_users as f64;

    let mut p_cp = Vec::with_capacity(k_users);
    let mut p_rrh = Vec::with_capacity(k_users);
    for v in &beams.v {
        p_cp.push(v.norm_squared());
        p_rrh.push((v.adjoint() * &gwg * v)[(0, 0)].re + trace_s1 * v.norm_squared());
    }
    Ok(PerUserPowers { p_cp, p_rrh, p_amp_noise: vec![amp_share; k_users] })
}

/// Sampling estimate of the SINR-defining expectations.
///
/// Draws channel errors, data symbols and receiver noise, accumulates
/// the four power terms of the received-signal decomposition and
/// returns their ratio.
pub fn mc_sinr_oracle<R: Rng + ?Sized>(
    knowledge: &ChannelKnowledge,
    beams: &BeamformerSet,
    k: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64, MetricsError> {
    check_dims(knowledge, beams)?;
    let w = beams.w_full();
    let (n, l, m) = (knowledge.n, knowledge.l, knowledge.m_antennas());
    let nl = n * l;
    let k_users = knowledge.k_users();

    let desired_coeff = {
        let row = knowledge.h_hat[k].adjoint() * &w * knowledge.g_hat.adjoint();
        (&row * &beams.v[k])[(0, 0)]
    };

    let mut p_d = 0.0;
    let mut p_i1 = 0.0;
    let mut p_i2 = 0.0;
    let mut p_n = 0.0;

    let mut dg = CMat::zeros(m, nl);
    let mut hk = CVec::zeros(nl);
    for _ in 0..n_samples {
        // True channels for this sample.
        for ni in 0..n {
            let var = knowledge.sigma1_sq[ni];
            for col in 0..l {
                for row in 0..m {
                    dg[(row, ni * l + col)] = complex_gaussian(rng, var);
                }
            }
        }
        let g_true = &knowledge.g_hat + &dg;
        for ni in 0..n {
            let var = knowledge.sigma2_sq[k][ni];
            for li in 0..l {
                hk[ni * l + li] = knowledge.h_hat[k][ni * l + li] + complex_gaussian(rng, var);
            }
        }

        let row_true = hk.adjoint() * &w * g_true.adjoint();
        let s: Vec<Complex64> = (0..k_users).map(|_| complex_gaussian(rng, 1.0)).collect();

        let desired = desired_coeff * s[k];
        let mismatch = ((&row_true * &beams.v[k])[(0, 0)] - desired_coeff) * s[k];
        let mut interference = Complex64::new(0.0, 0.0);
        for (l_idx, v) in beams.v.iter().enumerate() {
            if l_idx != k {
                interference += (&row_true * v)[(0, 0)] * s[l_idx];
            }
        }
        let mut noise = complex_gaussian(rng, knowledge.sigma_ms_sq);
        let hw = hk.adjoint() * &w;
        for i in 0..nl {
            noise += hw[(0, i)] * complex_gaussian(rng, knowledge.sigma_rrh_sq);
        }

        p_d += desired.norm_sqr();
        p_i1 += mismatch.norm_sqr();
        p_i2 += interference.norm_sqr();
        p_n += noise.norm_sqr();
    }
    let inv = 1.0 / n_samples as f64;
    Ok((p_d * inv) / ((p_i1 + p_i2 + p_n) * inv))
}
