//! Closed-form lower bound on the total transmit power.
//!
//! For a channel estimate and a set of SINR thresholds, a per-user power
//! floor is available in closed form whenever the per-user margin
//! `delta_k` is positive; `delta_k > 0` is a necessary condition for any
//! feasible design.  The module also provides the threshold at which the
//! margin vanishes and a numerical audit of the inequality chain behind
//! the bound, evaluated on concrete beamformers.

use crate::linalg::spectral_norm_sq;
use crate::metrics::{check_dims, total_power, BeamformerSet, MetricsError};
use crate::netmodel::ChannelKnowledge;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("expected {expected} SINR thresholds, got {got}")]
    ThresholdCount { expected: usize, got: usize },
    #[error("SINR thresholds must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("user index {0} out of range for {1} users")]
    UserIndex(usize, usize),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// The closed-form power floor and its ingredients.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// Per-user floor in watts; infinite where `delta[k] <= 0`.
    pub per_user_bound: Vec<f64>,
    /// Sum of the per-user floors; `None` unless all margins are positive.
    pub total_bound: Option<f64>,
    /// Per-user feasibility margins `delta_k`.
    pub delta: Vec<f64>,
    /// `h_tilde_k = ||h_hat_k||^2 + min_n sigma2_{k,n}^2`.
    pub h_tilde: Vec<f64>,
    /// `g_tilde = ||G_hat||^2 + min_n sigma1_n^2` (spectral norm).
    pub g_tilde: f64,
    /// True when every `delta_k` is positive.
    pub feasible: bool,
}

fn ingredients(knowledge: &ChannelKnowledge, k: usize) -> (f64, f64, f64, f64) {
    let d1 = knowledge.h_hat[k].norm_squared();
    let d2 = spectral_norm_sq(&knowledge.g_hat);
    let h_tilde = d1 + knowledge.sigma2_min(k);
    let g_tilde = d2 + knowledge.sigma1_min();
    (d1, d2, h_tilde, g_tilde)
}

/// Feasibility margin `delta_k` for one user at threshold `gamma`.
pub fn feasibility_margin(knowledge: &ChannelKnowledge, k: usize, gamma: f64) -> f64 {
    let (d1, d2, h_tilde, g_tilde) = ingredients(knowledge, k);
    (1.0 + 1.0 / gamma) * d1 * d2 - h_tilde * g_tilde
}

/// Threshold at which `delta_k` crosses zero; `+inf` when the margin is
/// positive for every threshold (as under perfect CSI).
pub fn max_threshold(knowledge: &ChannelKnowledge, k: usize) -> f64 {
    let (d1, d2, h_tilde, g_tilde) = ingredients(knowledge, k);
    let denom = h_tilde * g_tilde - d1 * d2;
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        d1 * d2 / denom
    }
}

/// Evaluates the closed-form floor for every user.
pub fn lower_bound(
    knowledge: &ChannelKnowledge,
    thresholds: &[f64],
) -> Result<BoundReport, BoundError> {
    let k_users = knowledge.k_users();
    if thresholds.len() != k_users {
        return Err(BoundError::ThresholdCount { expected: k_users, got: thresholds.len() });
    }
    if let Some(&g) = thresholds.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(BoundError::InvalidThreshold(g));
    }
    let sigma_rrh = knowledge.sigma_rrh_sq.sqrt();
    let sigma_ms = knowledge.sigma_ms_sq.sqrt();

    let mut per_user = Vec::with_capacity(k_users);
    let mut delta = Vec::with_capacity(k_users);
    let mut h_tilde_all = Vec::with_capacity(k_users);
    let mut g_tilde_out = 0.0;
    for (k, &gamma) in thresholds.iter().enumerate() {
        let (d1, d2, h_tilde, g_tilde) = ingredients(knowledge, k);
        g_tilde_out = g_tilde;
        let dl = (1.0 + 1.0 / gamma) * d1 * d2 - h_tilde * g_tilde;
        delta.push(dl);
        h_tilde_all.push(h_tilde);
        if dl > 0.0 {
            let num = h_tilde * knowledge.sigma_rrh_sq
                + g_tilde * knowledge.sigma_ms_sq
                + 2.0 * sigma_rrh * sigma_ms * (h_tilde * g_tilde + dl / k_users as f64).sqrt();
            per_user.push(num / dl);
        } else {
            per_user.push(f64::INFINITY);
        }
    }
    let feasible = delta.iter().all(|&d| d > 0.0);
    let total_bound = feasible.then(|| per_user.iter().sum());
    Ok(BoundReport {
        per_user_bound: per_user,
        total_bound,
        delta,
        h_tilde: h_tilde_all,
        g_tilde: g_tilde_out,
        feasible,
    })
}

/// One verified inequality of the audit chain.
#[derive(Debug, Clone)]
pub struct ChainStep {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `(lhs - rhs) / max(|lhs|, |rhs|)`; nonnegative when the step holds.
    pub margin: f64,
}

fn step(name: &'static str, lhs: f64, rhs: f64) -> ChainStep {
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    ChainStep { name, lhs, rhs, margin: (lhs - rhs) / scale }
}

/// Audit of the bound derivation for one user on concrete beamformers.
#[derive(Debug, Clone)]
pub struct ChainReport {
    /// `[ |h^H W G^H v|^2, ||W G^H v||^2, ||h^H W||^2, ||W||^2, ||v||^2 ]`.
    pub x: [f64; 5],
    /// Per-user power surrogate built from the same quantities.
    pub y: f64,
    /// `a` of the derivation; equals the feasibility margin `delta_k`.
    pub a: f64,
    pub b: f64,
    /// `a * x5 - b`; the chain requires this to be positive.
    pub x_slack: f64,
    pub steps: Vec<ChainStep>,
}

impl ChainReport {
    pub fn min_margin(&self) -> f64 {
        self.steps.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min)
    }

    /// Name of the worst step, for diagnostics.
    pub fn worst_step(&self) -> &'static str {
        self.steps
            .iter()
            .min_by(|p, q| p.margin.total_cmp(&q.margin))
            .map(|s| s.name)
            .unwrap_or("none")
    }
}

/// Evaluates every inequality of the derivation chain on a design that
/// satisfies the SINR constraint of user `k` at threshold `gamma`.
pub fn audit_appendix_b(
    knowledge: &ChannelKnowledge,
    beams: &BeamformerSet,
    k: usize,
    gamma: f64,
) -> Result<ChainReport, BoundError> {
    check_dims(knowledge, beams)?;
    if k >= knowledge.k_users() {
        return Err(BoundError::UserIndex(k, knowledge.k_users()));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(BoundError::InvalidThreshold(gamma));
    }
    let w = beams.w_full();
    let v = &beams.v[k];
    let h = &knowledge.h_hat[k];

    let wg_v = &w * (knowledge.g_hat.adjoint() * v);
    let hw = (h.adjoint() * &w).transpose();
    let x1 = (h.adjoint() * &wg_v)[(0, 0)].norm_sqr();
    let x2 = wg_v.norm_squared();
    let x3 = hw.norm_squared();
    let x4 = spectral_norm_sq(&w);
    let x5 = v.norm_squared();

    let c1 = gamma;
    let c2 = knowledge.sigma2_min(k);
    let c3 = knowledge.sigma1_min();
    let c4 = knowledge.sigma_rrh_sq;
    let c5 = knowledge.sigma_ms_sq;
    let c6 = knowledge.sigma_rrh_sq / knowledge.k_users() as f64;
    let d1 = h.norm_squared();
    let d2 = spectral_norm_sq(&knowledge.g_hat);

    let y = x2 + x5 + c3 * x4 * x5 + c6 * x4;
    let a = d1 * d2 / c1 - c2 * d2 - c3 * d1 - c2 * c3;
    let b = c4 * (d1 + c2);
    let x_slack = a * x5 - b;

    let mut steps = Vec::with_capacity(12);
    // SINR constraint after lower-bounding the interference and
    // amplified-noise terms by smallest-variance substitutions.
    steps.push(step(
        "sinr_relaxed",
        x1,
        c1 * (c2 * x2 + (c3 * x5 + c4) * (x3 + c2 * x4) + c5),
    ));
    steps.push(step("x2_cauchy_schwarz", x2 * d1, x1));
    steps.push(step("x3_submultiplicative", x4 * d1, x3));
    steps.push(step("x1_cauchy_schwarz", x3 * x5 * d2, x1));
    // Replace x4 by its floor x3 / d1 in both base inequalities.
    let inflate = 1.0 + c2 / d1;
    steps.push(step(
        "sinr_without_x4",
        x1,
        c1 * (c2 * x2 + (c3 * x5 + c4) * x3 * inflate + c5),
    ));
    steps.push(step("power_without_x4", y, x2 + x5 + (c3 * x5 + c6) * x3 / d1));
    // Isolate x2, then x3.
    steps.push(step(
        "x2_isolated",
        (d1 - c1 * c2) * x2,
        c1 * ((c3 * x5 + c4) * x3 * inflate + c5),
    ));
    steps.push(step(
        "x3_isolated",
        (x5 * d2 / c1 - (c3 * x5 + c4) * inflate) * x3,
        c2 * x2 + c5,
    ));
    // Floors for x3 and x2, in product form so a vanishing slack cannot
    // produce spurious overflow.
    steps.push(step("x3_floor", x3 * x_slack, d1 * c5));
    steps.push(step("x2_floor", x2 * x_slack, d2 * c5 * x5));
    if x_slack > 0.0 {
        let g_tilde = d2 + c3;
        steps.push(step(
            "power_floor",
            y,
            x5 + (d2 * c5 * x5 + c5 * (c3 * x5 + c6)) / x_slack,
        ));
        // Same floor with x5 rewritten through x_slack = a x5 - b; the
        // AM-GM step then minimizes over the slack, which reproduces the
        // reported closed form exactly.
        steps.push(step(
            "power_floor_shifted",
            y,
            (b + c5 * g_tilde + x_slack + (c5 * g_tilde * b + c5 * c6 * a) / x_slack) / a,
        ));
        steps.push(step(
            "power_floor_amgm",
            y,
            (b + c5 * g_tilde + 2.0 * (c5 * g_tilde * b + c5 * c6 * a).sqrt()) / a,
        ));
        // The closed form reported by `lower_bound` for this user.
        let h_tilde = d1 + c2;
        let reported = (h_tilde * c4
            + g_tilde * c5
            + 2.0 * (c4 * c5).sqrt() * (h_tilde * g_tilde + a / knowledge.k_users() as f64).sqrt())
            / a;
        steps.push(step("reported_bound", y, reported));
    }
    Ok(ChainReport { x: [x1, x2, x3, x4, x5], y, a, b, x_slack, steps })
}

/// Design-level audit: per-user chains plus the aggregation step that
/// the per-user surrogates sum to at most the total power.
#[derive(Debug, Clone)]
pub struct DesignAudit {
    pub per_user: Vec<ChainReport>,
    /// Margin of `total_power >= sum_k y_k`.
    pub aggregation: ChainStep,
    /// Margin of `total_power >= total_bound` when the bound is finite.
    pub dominance: Option<ChainStep>,
}

impl DesignAudit {
    pub fn min_margin(&self) -> f64 {
        let per_user = self.per_user.iter().map(|r| r.min_margin()).fold(f64::INFINITY, f64::min);
        let dom = self.dominance.as_ref().map(|s| s.margin).unwrap_or(f64::INFINITY);
        per_user.min(self.aggregation.margin).min(dom)
    }
}

pub fn audit_design(
    knowledge: &ChannelKnowledge,
    beams: &BeamformerSet,
    thresholds: &[f64],
) -> Result<DesignAudit, BoundError> {
    let k_users = knowledge.k_users();
    if thresholds.len() != k_users {
        return Err(BoundError::ThresholdCount { expected: k_users, got: thresholds.len() });
    }
    let per_user: Vec<ChainReport> = (0..k_users)
        .map(|k| audit_appendix_b(knowledge, beams, k, thresholds[k]))
        .collect::<Result<_, _>>()?;
    let total = total_power(knowledge, beams)?;
    let y_sum: f64 = per_user.iter().map(|r| r.y).sum();
    let aggregation = step("power_aggregation", total, y_sum);
    let report = lower_bound(knowledge, thresholds)?;
    let dominance = report.total_bound.map(|b| step("bound_dominance", total, b));
    Ok(DesignAudit { per_user, aggregation, dominance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CMat, CVec};
    use crate::metrics::sinr;
    use crate::netmodel::complex_gaussian;
    use approx::assert_relative_eq;
    use num_complex::Complex64 as C;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_knowledge() -> ChannelKnowledge {
        ChannelKnowledge {
            g_hat: CMat::from_element(1, 1, C::new(2.0, 0.0)),
            h_hat: vec![CVec::from_element(1, C::new(1.0, 0.0))],
            sigma1_sq: vec![0.01],
            sigma2_sq: vec![vec![0.01]],
            sigma_rrh_sq: 0.1,
            sigma_ms_sq: 0.1,
            n: 1,
            l: 1,
        }
    }

    #[test]
    fn scalar_reference_values() {
        let kn = scalar_knowledge();
        assert_relative_eq!(feasibility_margin(&kn, 0, 2.0), 1.9499, max_relative = 1e-12);
        let report = lower_bound(&kn, &[2.0]).unwrap();
        assert!(report.feasible);
        assert_relative_eq!(report.delta[0], 1.9499, max_relative = 1e-12);
        assert_relative_eq!(report.h_tilde[0], 1.01, max_relative = 1e-12);
        assert_relative_eq!(report.g_tilde, 4.01, max_relative = 1e-12);
        let expect = (0.101 + 0.401 + 0.2 * 6.0f64.sqrt()) / 1.9499;
        assert_relative_eq!(report.per_user_bound[0], expect, max_relative = 1e-12);
        assert_relative_eq!(report.per_user_bound[0], 0.5087, epsilon = 1e-4);
        assert_relative_eq!(report.total_bound.unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn infeasible_threshold_flagged() {
        let kn = scalar_knowledge();
        let gmax = max_threshold(&kn, 0);
        let report = lower_bound(&kn, &[gmax * 2.0]).unwrap();
        assert!(!report.feasible);
        assert!(report.total_bound.is_none());
        assert!(report.per_user_bound[0].is_infinite());
        assert!(report.delta[0] <= 0.0);
    }

    #[test]
    fn max_threshold_matches_bisection() {
        let kn = scalar_knowledge();
        let gmax = max_threshold(&kn, 0);
        assert_relative_eq!(gmax, 4.0 / 0.0501, max_relative = 1e-12);

        // Bisection on delta(gamma) = 0 must land on the same root.
        let (mut lo, mut hi) = (1.0, 1e4);
        assert!(feasibility_margin(&kn, 0, lo) > 0.0);
        assert!(feasibility_margin(&kn, 0, hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if feasibility_margin(&kn, 0, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(gmax, 0.5 * (lo + hi), max_relative = 1e-10);

        assert!(feasibility_margin(&kn, 0, gmax * 0.999) > 0.0);
        assert!(feasibility_margin(&kn, 0, gmax * 1.001) < 0.0);
    }

    #[test]
    fn perfect_csi_never_hits_the_ceiling() {
        let mut kn = scalar_knowledge();
        kn.sigma1_sq = vec![0.0];
        kn.sigma2_sq = vec![vec![0.0]];
        assert!(max_threshold(&kn, 0).is_infinite());
        // The large-threshold case loses digits to cancellation, so the
        // comparison is looser than machine precision.
        for gamma in [0.1, 1.0, 10.0, 1e6] {
            let d = feasibility_margin(&kn, 0, gamma);
            assert_relative_eq!(d, 4.0 / gamma, max_relative = 1e-9);
            assert!(d > 0.0);
        }
    }

    #[test]
    fn margin_decreases_in_threshold() {
        let kn = scalar_knowledge();
        let mut prev = f64::INFINITY;
        for gamma in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let d = feasibility_margin(&kn, 0, gamma);
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn bound_monotone_in_noise_and_threshold() {
        let kn = scalar_knowledge();
        let base = lower_bound(&kn, &[2.0]).unwrap().per_user_bound[0];

        let mut louder = kn.clone();
        louder.sigma_ms_sq *= 4.0;
        assert!(lower_bound(&louder, &[2.0]).unwrap().per_user_bound[0] > base);

        let mut louder = kn.clone();
        louder.sigma_rrh_sq *= 4.0;
        assert!(lower_bound(&louder, &[2.0]).unwrap().per_user_bound[0] > base);

        assert!(lower_bound(&kn, &[3.0]).unwrap().per_user_bound[0] > base);
    }

    #[test]
    fn bound_decreases_in_channel_strength() {
        let kn = scalar_knowledge();
        let base = lower_bound(&kn, &[2.0]).unwrap().per_user_bound[0];

        let mut stronger = kn.clone();
        stronger.h_hat[0] *= C::new(1.5, 0.0);
        assert!(lower_bound(&stronger, &[2.0]).unwrap().per_user_bound[0] < base);

        let mut stronger = kn.clone();
        stronger.g_hat *= C::new(1.5, 0.0);
        assert!(lower_bound(&stronger, &[2.0]).unwrap().per_user_bound[0] < base);
    }

    #[test]
    fn threshold_validation() {
        let kn = scalar_knowledge();
        assert!(lower_bound(&kn, &[]).is_err());
        assert!(lower_bound(&kn, &[0.0]).is_err());
        assert!(lower_bound(&kn, &[-1.0]).is_err());
        assert!(lower_bound(&kn, &[f64::INFINITY]).is_err());
    }

    fn random_knowledge<R: rand::Rng>(
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
            sigma_rrh_sq: 0.01,
            sigma_ms_sq: 0.01,
            n,
            l,
        }
    }

    /// Zero-forcing construction: W = I and v chosen so that the
    /// estimated cross gains vanish, then scaled until the SINR
    /// constraints hold.
    fn feasible_design(kn: &ChannelKnowledge, gamma: f64) -> Option<BeamformerSet> {
        let k_users = kn.k_users();
        let m = kn.m_antennas();
        // Rows of the estimated compound channel h_k^H G^H.
        let mut rows = CMat::zeros(k_users, m);
        for k in 0..k_users {
            let r = kn.h_hat[k].adjoint() * kn.g_hat.adjoint();
            for i in 0..m {
                rows[(k, i)] = r[(0, i)];
            }
        }
        // Right pseudo-inverse gives v with rows * v = I.
        let gram = &rows * rows.adjoint();
        let inv = gram.try_inverse()?;
        let pinv = rows.adjoint() * inv;
        let mut beams = BeamformerSet {
            v: (0..k_users).map(|k| pinv.column(k).into_owned()).collect(),
            w_blocks: (0..kn.n).map(|_| CMat::identity(kn.l, kn.l)).collect(),
        };
        for _ in 0..60 {
            let ok = (0..k_users).all(|k| sinr(kn, &beams, k).unwrap() >= gamma * (1.0 + 1e-9));
            if ok {
                return Some(beams);
            }
            beams = beams.scaled(2.0, 1.0);
        }
        None
    }

    #[test]
    fn audit_chain_holds_on_feasible_designs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let gamma = 2.0;
        let mut audited = 0;
        for _ in 0..20 {
            let kn = random_knowledge(2, 2, 2, 4, 1e-4, &mut rng);
            let Some(beams) = feasible_design(&kn, gamma) else { continue };
            let audit = audit_design(&kn, &beams, &[gamma, gamma]).unwrap();
            for report in &audit.per_user {
                assert!(report.x_slack > 0.0, "chain slack not positive");
                assert!(
                    report.min_margin() >= -1e-9,
                    "step {} failed with margin {}",
                    report.worst_step(),
                    report.min_margin()
                );
                assert_eq!(report.steps.len(), 14);
            }
            assert!(audit.aggregation.margin >= -1e-9);
            assert!(audit.dominance.as_ref().unwrap().margin >= -1e-9);
            assert!(audit.min_margin() >= -1e-9);
            audited += 1;
        }
        assert!(audited >= 10, "only {audited} designs audited");
    }

    #[test]
    fn aggregation_holds_for_arbitrary_designs() {
        // The per-user surrogate sum is a floor of the total power for
        // any beamformers, feasible or not.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..30 {
            let kn = random_knowledge(3, 2, 2, 3, 1e-2, &mut rng);
            let beams = BeamformerSet {
                v: (0..3).map(|_| CVec::from_fn(3, |_, _| complex_gaussian(&mut rng, 1.0))).collect(),
                w_blocks: (0..2)
                    .map(|_| CMat::from_fn(2, 2, |_, _| complex_gaussian(&mut rng, 1.0)))
                    .collect(),
            };
            let total = total_power(&kn, &beams).unwrap();
            let y_sum: f64 = (0..3)
                .map(|k| audit_appendix_b(&kn, &beams, k, 1.0).unwrap().y)
                .sum();
            assert!(total >= y_sum * (1.0 - 1e-9), "total {total} below surrogate sum {y_sum}");
        }
    }

    #[test]
    fn audit_slack_equals_margin_product() {
        // The chain constant `a` is exactly the feasibility margin.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let kn = random_knowledge(2, 2, 2, 4, 1e-3, &mut rng);
        let beams = BeamformerSet {
            v: (0..2).map(|_| CVec::from_fn(4, |_, _| complex_gaussian(&mut rng, 1.0))).collect(),
            w_blocks: (0..2)
                .map(|_| CMat::from_fn(2, 2, |_, _| complex_gaussian(&mut rng, 1.0)))
                .collect(),
        };
        for k in 0..2 {
            for gamma in [0.5, 2.0, 8.0] {
                let report = audit_appendix_b(&kn, &beams, k, gamma).unwrap();
                assert_relative_eq!(
                    report.a,
                    feasibility_margin(&kn, k, gamma),
                    max_relative = 1e-10
                );
            }
        }
    }
}
