//! Cluster geometry, channel generation and imperfect-CSI knowledge.
//!
//! A central processor (CP) sits at the origin of a circular cell.  RRHs
//! and MSs are placed uniformly in the cell, subject to minimum-distance
//! guards.  Fronthaul (CP to RRH) and access (RRH to MS) channels follow
//! a 3GPP-style model: distance path loss, log-normal shadowing and
//! Rayleigh small-scale fading.  Channel estimates carry additive
//! Gaussian errors whose power is a fixed fraction `gamma_ch` of the
//! channel power.

use crate::linalg::{CMat, CVec, RVec};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("geometry sampling exceeded {0} draws; relax the distance guards")]
    GeometrySampling(usize),
}

/// Cluster dimensions and campaign-level knobs.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    /// Number of single-antenna mobile stations.
    pub k: usize,
    /// Number of RRHs.
    pub n: usize,
    /// Antennas per RRH.
    pub l: usize,
    /// CP antennas.
    pub m: usize,
    /// Per-user SINR thresholds in dB (length `k`).
    pub gamma_db: Vec<f64>,
    /// Ratio of channel-error power to channel power.
    pub gamma_ch: f64,
    /// Campaign base seed.
    pub seed: u64,
    /// Monte Carlo trial count.
    pub trials: usize,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.k < 1 || self.n < 1 || self.l < 1 {
            return Err(NetError::InvalidConfig("K, N, L must all be at least 1".into()));
        }
        if self.m < self.k {
            return Err(NetError::InvalidConfig(format!(
                "M = {} must be at least K = {} so the CP can separate user streams",
                self.m, self.k
            )));
        }
        if self.gamma_db.len() != self.k {
            return Err(NetError::InvalidConfig(format!(
                "gamma_db has {} entries, expected K = {}",
                self.gamma_db.len(),
                self.k
            )));
        }
        if self.gamma_db.iter().any(|g| !g.is_finite()) {
            return Err(NetError::InvalidConfig("SINR thresholds must be finite".into()));
        }
        if self.gamma_ch.is_nan() || self.gamma_ch < 0.0 {
            return Err(NetError::InvalidConfig("gamma_ch must be non-negative".into()));
        }
        Ok(())
    }

    /// Thresholds converted from dB to linear scale.
    pub fn gamma_lin(&self) -> Vec<f64> {
        self.gamma_db.iter().map(|g| 10f64.powf(g / 10.0)).collect()
    }
}

/// Radio parameters of the channel model.
#[derive(Debug, Clone)]
pub struct ChannelParams {
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
    /// Antenna gains in dBi for (CP, RRH, MS).
    pub antenna_gains_dbi: [f64; 3],
    /// Shadowing standard deviations in dB for (fronthaul, access).
    pub shadowing_std_db: [f64; 2],
    pub bandwidth_hz: f64,
    pub nsd_dbm_hz: f64,
    pub nf_rrh_db: f64,
    pub nf_ms_db: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            cell_radius_m: 1000.0,
            min_distance_m: 50.0,
            antenna_gains_dbi: [9.0, 0.0, 0.0],
            // Shadowing variances of 6 dB (fronthaul) and 4 dB (access).
            shadowing_std_db: [6f64.sqrt(), 2.0],
            bandwidth_hz: 10.0e6,
            nsd_dbm_hz: -174.0,
            nf_rrh_db: 2.0,
            nf_ms_db: 10.0,
        }
    }
}

impl ChannelParams {
    /// Receiver noise powers `(sigma_rrh_sq, sigma_ms_sq)` in watts.
    pub fn noise(&self) -> (f64, f64) {
        noise_powers(self.bandwidth_hz, self.nsd_dbm_hz, self.nf_rrh_db, self.nf_ms_db)
    }
}

/// Node placement in the plane, in meters, CP at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub cp_position: [f64; 2],
    pub rrh_positions: Vec<[f64; 2]>,
    pub ms_positions: Vec<[f64; 2]>,
}

impl Geometry {
    /// Flat list of coordinates in a stable order, used for digests.
    pub fn flat_coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * (1 + self.rrh_positions.len() + self.ms_positions.len()));
        out.extend_from_slice(&self.cp_position);
        for p in &self.rrh_positions {
            out.extend_from_slice(p);
        }
        for p in &self.ms_positions {
            out.extend_from_slice(p);
        }
        out
    }
}

/// True channels of one realization.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Fronthaul channel, `M x NL`, blocks `G_n` of `M x L`.
    pub g: CMat,
    /// Access channels, `K` vectors of length `NL`.
    pub h: Vec<CVec>,
    pub geometry: Geometry,
}

/// What the designer knows: estimates plus error statistics.
#[derive(Debug, Clone)]
pub struct ChannelKnowledge {
    /// Fronthaul estimate, `M x NL`.
    pub g_hat: CMat,
    /// Access estimates, `K` vectors of length `NL`.
    pub h_hat: Vec<CVec>,
    /// Per-entry error variance of each fronthaul block, length `N`.
    pub sigma1_sq: Vec<f64>,
    /// Per-entry error variance of each access block, `K x N`.
    pub sigma2_sq: Vec<Vec<f64>>,
    /// RRH receiver noise power in watts.
    pub sigma_rrh_sq: f64,
    /// MS receiver noise power in watts.
    pub sigma_ms_sq: f64,
    /// RRH count.
    pub n: usize,
    /// Antennas per RRH.
    pub l: usize,
}

impl ChannelKnowledge {
    pub fn k_users(&self) -> usize {
        self.h_hat.len()
    }

    pub fn m_antennas(&self) -> usize {
        self.g_hat.nrows()
    }

    pub fn nl(&self) -> usize {
        self.n * self.l
    }

    /// Block `G_hat_n` as an owned `M x L` matrix.
    pub fn g_hat_block(&self, n: usize) -> CMat {
        self.g_hat.columns(n * self.l, self.l).into_owned()
    }

    /// Diagonal of `Sigma_1` as a length-`NL` real vector.
    pub fn sigma1_diag(&self) -> RVec {
        RVec::from_fn(self.nl(), |i, _| self.sigma1_sq[i / self.l])
    }

    /// Diagonal of `Sigma_{2,k}` as a length-`NL` real vector.
    pub fn sigma2_diag(&self, k: usize) -> RVec {
        RVec::from_fn(self.nl(), |i, _| self.sigma2_sq[k][i / self.l])
    }

    pub fn sigma1_min(&self) -> f64 {
        self.sigma1_sq.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sigma2_min(&self, k: usize) -> f64 {
        self.sigma2_sq[k].iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// One draw of a circularly-symmetric complex Gaussian with the given
/// per-entry variance (total power over real and imaginary parts).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Fronthaul path loss in dB at distance `d` meters.
pub fn pathloss_fronthaul_db(d: f64) -> Result<f64, NetError> {
    if d <= 0.0 {
        return Err(NetError::NonPositiveDistance(d));
    }
    Ok(24.6 + 39.1 * d.log10())
}

/// Access-link path loss in dB at distance `d` meters.
pub fn pathloss_access_db(d: f64) -> Result<f64, NetError> {
    if d <= 0.0 {
        return Err(NetError::NonPositiveDistance(d));
    }
    Ok(36.8 + 36.7 * d.log10())
}

/// Receiver noise powers in watts from bandwidth, noise spectral
/// density and noise figures.
pub fn noise_powers(bandwidth_hz: f64, nsd_dbm_hz: f64, nf_rrh_db: f64, nf_ms_db: f64) -> (f64, f64) {
    let base_dbm = nsd_dbm_hz + 10.0 * bandwidth_hz.log10();
    let to_watts = |dbm: f64| 10f64.powf((dbm - 30.0) / 10.0);
    (to_watts(base_dbm + nf_rrh_db), to_watts(base_dbm + nf_ms_db))
}

const MAX_GEOMETRY_DRAWS: usize = 1_000_000;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Draws RRH and MS positions uniformly in the cell, rejecting any draw
/// that violates a CP-RRH, CP-MS or RRH-MS minimum distance.
pub fn sample_geometry<R: Rng + ?Sized>(
    config: &NetworkConfig,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<Geometry, NetError> {
    config.validate()?;
    let radius = params.cell_radius_m;
    let min_d = params.min_distance_m;
    if radius.is_nan() || radius <= 0.0 || min_d < 0.0 || min_d > radius {
        return Err(NetError::InvalidConfig(format!(
            "cell radius {radius} m and minimum distance {min_d} m are inconsistent"
        )));
    }
    let cp = [0.0, 0.0];
    let mut draws = 0usize;
    let draw_point = |rng: &mut R, draws: &mut usize| -> Result<[f64; 2], NetError> {
        *draws += 1;
        if *draws > MAX_GEOMETRY_DRAWS {
            return Err(NetError::GeometrySampling(MAX_GEOMETRY_DRAWS));
        }
        // Uniform over the disk: radius via the square-root transform.
        let r = radius * rng.gen::<f64>().sqrt();
        let theta = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
        Ok([r * theta.cos(), r * theta.sin()])
    };

    let mut rrh = Vec::with_capacity(config.n);
    while rrh.len() < config.n {
        let p = draw_point(rng, &mut draws)?;
        if dist(p, cp) >= min_d {
            rrh.push(p);
        }
    }
    let mut ms = Vec::with_capacity(config.k);
    while ms.len() < config.k {
        let p = draw_point(rng, &mut draws)?;
        if dist(p, cp) >= min_d && rrh.iter().all(|&q| dist(p, q) >= min_d) {
            ms.push(p);
        }
    }
    Ok(Geometry { cp_position: cp, rrh_positions: rrh, ms_positions: ms })
}

/// Per-entry linear power gain of a link: path loss, antenna gains and
/// one shadowing draw.
fn link_gain<R: Rng + ?Sized>(pl_db: f64, gains_db: f64, shadow_std_db: f64, rng: &mut R) -> f64 {
    let shadow: f64 = if shadow_std_db > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        shadow_std_db * z
    } else {
        0.0
    };
    10f64.powf((-pl_db + gains_db + shadow) / 10.0)
}

/// Draws the true channels for a fixed geometry.
///
/// Draw order is fixed (fronthaul blocks by RRH index, then access
/// blocks by MS-major order) so results are reproducible for a given
/// RNG stream.
pub fn sample_channels<R: Rng + ?Sized>(
    geometry: &Geometry,
    config: &NetworkConfig,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<ChannelRealization, NetError> {
    let (m, n, l, k) = (config.m, config.n, config.l, config.k);
    let [g_cp, g_rrh, g_ms] = params.antenna_gains_dbi;
    let nl = n * l;

    let mut g = CMat::zeros(m, nl);
    for ni in 0..n {
        let d = dist(geometry.cp_position, geometry.rrh_positions[ni]);
        let pl = pathloss_fronthaul_db(d)?;
        let gain = link_gain(pl, g_cp + g_rrh, params.shadowing_std_db[0], rng);
        for col in 0..l {
            for row in 0..m {
                g[(row, ni * l + col)] = complex_gaussian(rng, gain);
            }
        }
    }

    let mut h = Vec::with_capacity(k);
    for ki in 0..k {
        let mut hk = CVec::zeros(nl);
        for ni in 0..n {
            let d = dist(geometry.rrh_positions[ni], geometry.ms_positions[ki]);
            let pl = pathloss_access_db(d)?;
            let gain = link_gain(pl, g_rrh + g_ms, params.shadowing_std_db[1], rng);
            for li in 0..l {
                hk[ni * l + li] = complex_gaussian(rng, gain);
            }
        }
        h.push(hk);
    }

    Ok(ChannelRealization { g, h, geometry: geometry.clone() })
}

/// Adds estimation errors with relative power `gamma_ch` and returns
/// the designer-side knowledge.
///
/// Errors are drawn with variances tied to the true channel norms and
/// the estimate is truth minus error.  The reported variances are then
/// recomputed from the estimates, which is all a designer could do.
pub fn apply_estimation_error<R: Rng + ?Sized>(
    truth: &ChannelRealization,
    config: &NetworkConfig,
    gamma_ch: f64,
    noise: (f64, f64),
    rng: &mut R,
) -> Result<ChannelKnowledge, NetError> {
    if gamma_ch.is_nan() || gamma_ch < 0.0 {
        return Err(NetError::InvalidConfig("gamma_ch must be non-negative".into()));
    }
    let (m, n, l, k) = (config.m, config.n, config.l, config.k);
    let nl = n * l;

    let mut g_hat = truth.g.clone();
    let mut sigma1_sq = vec![0.0; n];
    if gamma_ch > 0.0 {
        for ni in 0..n {
            let block_power: f64 = truth
                .g
                .columns(ni * l, l)
                .iter()
                .map(|z| z.norm_sqr())
                .sum();
            let var_gen = gamma_ch * block_power / (m * l) as f64;
            for col in 0..l {
                for row in 0..m {
                    g_hat[(row, ni * l + col)] -= complex_gaussian(rng, var_gen);
                }
            }
        }
    }
    for (ni, s1) in sigma1_sq.iter_mut().enumerate() {
        let est_power: f64 = g_hat.columns(ni * l, l).iter().map(|z| z.norm_sqr()).sum();
        *s1 = gamma_ch * est_power / (m * l) as f64;
    }

    let mut h_hat: Vec<CVec> = truth.h.clone();
    let mut sigma2_sq = vec![vec![0.0; n]; k];
    if gamma_ch > 0.0 {
        for (hk, truth_hk) in h_hat.iter_mut().zip(&truth.h) {
            for ni in 0..n {
                let block_power: f64 =
                    (0..l).map(|li| truth_hk[ni * l + li].norm_sqr()).sum();
                let var_gen = gamma_ch * block_power / l as f64;
                for li in 0..l {
                    hk[ni * l + li] -= complex_gaussian(rng, var_gen);
                }
            }
        }
    }
    for ki in 0..k {
        for ni in 0..n {
            let est_power: f64 = (0..l).map(|li| h_hat[ki][ni * l + li].norm_sqr()).sum();
            sigma2_sq[ki][ni] = gamma_ch * est_power / l as f64;
        }
    }

    debug_assert_eq!(g_hat.ncols(), nl);
    Ok(ChannelKnowledge {
        g_hat,
        h_hat,
        sigma1_sq,
        sigma2_sq,
        sigma_rrh_sq: noise.0,
        sigma_ms_sq: noise.1,
        n,
        l,
    })
}
