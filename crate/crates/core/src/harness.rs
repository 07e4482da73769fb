//! Seeded Monte Carlo campaigns over the design methods.
//!
//! A campaign samples geometry and channels per trial, evaluates the
//! power floor, runs the selected design methods, and aggregates
//! feasibility percentages, mean powers and runtimes.  Per-trial seeds
//! come from a counter-based split of the campaign seed, so results do
//! not depend on execution order or thread count.

use crate::bound::{self, BoundError, BoundReport};
use crate::classic_design;
use crate::netmodel::{
    sample_channels, sample_geometry, ChannelKnowledge, ChannelParams, Geometry, NetError,
    NetworkConfig,
};
use crate::sdr_design::{self, DesignOutcome};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Domain in which campaign mean powers are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingDomain {
    /// Average watts, then convert to dBW.
    Linear,
    /// Average the per-trial dBW values directly.
    Db,
}

impl AveragingDomain {
    pub fn name(&self) -> &'static str {
        match self {
            AveragingDomain::Linear => "linear",
            AveragingDomain::Db => "db",
        }
    }
}

/// The four design methods a campaign can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ao,
    Tsm,
    MrcZf,
    SvdZf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ao, Method::Tsm, Method::MrcZf, Method::SvdZf];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ao => "ao",
            Method::Tsm => "tsm",
            Method::MrcZf => "mrc_zf",
            Method::SvdZf => "svd_zf",
        }
    }

    fn from_name(s: &str) -> Result<Method, HarnessError> {
        match s {
            "ao" => Ok(Method::Ao),
            "tsm" => Ok(Method::Tsm),
            "mrc_zf" => Ok(Method::MrcZf),
            "svd_zf" => Ok(Method::SvdZf),
            other => Err(HarnessError::Config(format!("unknown method '{other}'"))),
        }
    }

    /// Stable index used for seed derivation, independent of which
    /// subset of methods a campaign runs.
    fn canonical_index(&self) -> u64 {
        match self {
            Method::Ao => 0,
            Method::Tsm => 1,
            Method::MrcZf => 2,
            Method::SvdZf => 3,
        }
    }
}

/// Full campaign configuration.
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub net: NetworkConfig,
    pub channel: ChannelParams,
    pub averaging: AveragingDomain,
    /// Methods to run, in canonical order.
    pub methods: Vec<Method>,
    /// Fixed RRH placement; both position lists must be set together.
    pub rrh_positions: Option<Vec<[f64; 2]>>,
    pub ms_positions: Option<Vec<[f64; 2]>>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            net: NetworkConfig {
                k: 4,
                n: 4,
                l: 4,
                m: 8,
                gamma_db: vec![5.0; 4],
                gamma_ch: 0.01,
                seed: 1,
                trials: 100,
            },
            channel: ChannelParams::default(),
            averaging: AveragingDomain::Linear,
            methods: Method::ALL.to_vec(),
            rrh_positions: None,
            ms_positions: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .trim()
        .parse()
        .map_err(|_| HarnessError::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, HarnessError> {
    value
        .split(',')
        .map(|p| parse_num::<f64>(key, p))
        .collect()
}

fn parse_positions(key: &str, value: &str) -> Result<Vec<[f64; 2]>, HarnessError> {
    value
        .split(';')
        .map(|pair| {
            let mut it = pair.split(':');
            let bad = || HarnessError::Config(format!("expected 'x:y' pairs for key '{key}'"));
            let x: f64 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            let y: f64 = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            if it.next().is_some() {
                return Err(bad());
            }
            Ok([x, y])
        })
        .collect()
}

impl CampaignConfig {
    /// Parses the flat key-value config format.  Lines are `key = value`;
    /// blank lines and `#` comments are skipped.  A scalar `gamma_db`
    /// is replicated across users.
    pub fn parse(text: &str) -> Result<CampaignConfig, HarnessError> {
        let mut cfg = CampaignConfig::default();
        let mut gamma_raw: Option<Vec<f64>> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "K" => cfg.net.k = parse_num(key, value)?,
                "N" => cfg.net.n = parse_num(key, value)?,
                "L" => cfg.net.l = parse_num(key, value)?,
                "M" => cfg.net.m = parse_num(key, value)?,
                "gamma_db" => gamma_raw = Some(parse_list(key, value)?),
                "gamma_ch" => cfg.net.gamma_ch = parse_num(key, value)?,
                "trials" => cfg.net.trials = parse_num(key, value)?,
                "seed" => cfg.net.seed = parse_num(key, value)?,
                "cell_radius_m" => cfg.channel.cell_radius_m = parse_num(key, value)?,
                "min_distance_m" => cfg.channel.min_distance_m = parse_num(key, value)?,
                "bandwidth_hz" => cfg.channel.bandwidth_hz = parse_num(key, value)?,
                "nsd_dbm_hz" => cfg.channel.nsd_dbm_hz = parse_num(key, value)?,
                "nf_rrh_db" => cfg.channel.nf_rrh_db = parse_num(key, value)?,
                "nf_ms_db" => cfg.channel.nf_ms_db = parse_num(key, value)?,
                "antenna_gains_dbi" => {
                    let v = parse_list(key, value)?;
                    cfg.channel.antenna_gains_dbi = v.try_into().map_err(|_| {
                        HarnessError::Config("antenna_gains_dbi needs exactly 3 values".into())
                    })?;
                }
                "shadowing_std_db" => {
                    let v = parse_list(key, value)?;
                    cfg.channel.shadowing_std_db = v.try_into().map_err(|_| {
                        HarnessError::Config("shadowing_std_db needs exactly 2 values".into())
                    })?;
                }
                "averaging_domain" => {
                    cfg.averaging = match value {
                        "linear" => AveragingDomain::Linear,
                        "db" => AveragingDomain::Db,
                        other => {
                            return Err(HarnessError::Config(format!(
                                "averaging_domain must be 'linear' or 'db', got '{other}'"
                            )))
                        }
                    }
                }
                "methods" => {
                    let mut methods = Vec::new();
                    for part in value.split(',') {
                        let m = Method::from_name(part.trim())?;
                        if !methods.contains(&m) {
                            methods.push(m);
                        }
                    }
                    methods.sort_by_key(|m| m.canonical_index());
                    cfg.methods = methods;
                }
                "rrh_positions" => cfg.rrh_positions = Some(parse_positions(key, value)?),
                "ms_positions" => cfg.ms_positions = Some(parse_positions(key, value)?),
                other => {
                    return Err(HarnessError::Config(format!("unknown config key '{other}'")))
                }
            }
        }
        if let Some(g) = gamma_raw {
            cfg.net.gamma_db = if g.len() == 1 { vec![g[0]; cfg.net.k] } else { g };
        } else {
            cfg.net.gamma_db = vec![cfg.net.gamma_db[0]; cfg.net.k];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.net.validate()?;
        if self.net.trials < 1 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if !(self.channel.cell_radius_m > 0.0 && self.channel.bandwidth_hz > 0.0) {
            return Err(HarnessError::Config(
                "cell_radius_m and bandwidth_hz must be positive".into(),
            ));
        }
        match (&self.rrh_positions, &self.ms_positions) {
            (None, None) => {}
            (Some(r), Some(m)) => {
                if r.len() != self.net.n || m.len() != self.net.k {
                    return Err(HarnessError::Config(format!(
                        "fixed geometry needs {} RRH and {} MS positions",
                        self.net.n, self.net.k
                    )));
                }
            }
            _ => {
                return Err(HarnessError::Config(
                    "rrh_positions and ms_positions must be given together".into(),
                ))
            }
        }
        Ok(())
    }
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    GammaDb,
    K,
    N,
    L,
    M,
    GammaCh,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::GammaDb => "gamma_db",
            SweepParameter::K => "K",
            SweepParameter::N => "N",
            SweepParameter::L => "L",
            SweepParameter::M => "M",
            SweepParameter::GammaCh => "gamma_ch",
        }
    }

    pub fn from_name(s: &str) -> Result<SweepParameter, HarnessError> {
        match s {
            "gamma_db" => Ok(SweepParameter::GammaDb),
            "K" => Ok(SweepParameter::K),
            "N" => Ok(SweepParameter::N),
            "L" => Ok(SweepParameter::L),
            "M" => Ok(SweepParameter::M),
            "gamma_ch" => Ok(SweepParameter::GammaCh),
            other => Err(HarnessError::Config(format!("unknown sweep parameter '{other}'"))),
        }
    }
}

/// Returns a copy of the config with one swept parameter applied.
pub fn with_parameter(
    config: &CampaignConfig,
    parameter: SweepParameter,
    value: f64,
) -> Result<CampaignConfig, HarnessError> {
    let mut cfg = config.clone();
    let as_count = |value: f64| -> Result<usize, HarnessError> {
        if value.fract() != 0.0 || value < 1.0 {
            return Err(HarnessError::Config(format!(
                "{} must be a positive integer, got {value}",
                parameter.name()
            )));
        }
        Ok(value as usize)
    };
    match parameter {
        SweepParameter::GammaDb => cfg.net.gamma_db = vec![value; cfg.net.k],
        SweepParameter::K => {
            cfg.net.k = as_count(value)?;
            cfg.net.gamma_db = vec![cfg.net.gamma_db[0]; cfg.net.k];
        }
        SweepParameter::N => cfg.net.n = as_count(value)?,
        SweepParameter::L => cfg.net.l = as_count(value)?,
        SweepParameter::M => cfg.net.m = as_count(value)?,
        SweepParameter::GammaCh => cfg.net.gamma_ch = value,
    }
    // Fixed placements cannot follow dimension changes.
    if matches!(parameter, SweepParameter::K | SweepParameter::N) {
        cfg.rrh_positions = None;
        cfg.ms_positions = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial seed from the campaign seed and the trial counter.
pub fn trial_seed(campaign_seed: u64, trial: usize) -> u64 {
    mix(campaign_seed ^ mix(trial as u64 + 1))
}

fn purpose_rng(seed: u64, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ mix(0x100 + purpose)))
}

fn geometry_digest(geometry: &Geometry) -> String {
    let mut hasher = Sha256::new();
    for c in geometry.flat_coords() {
        hasher.update(c.to_bits().to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(16);
    for byte in &digest[..8] {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Everything recorded about one Monte Carlo trial.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub geometry_digest: String,
    /// One outcome per selected method, in canonical order.
    pub outcomes: Vec<(Method, DesignOutcome)>,
    pub bound: BoundReport,
    pub bound_runtime_s: f64,
    /// Thresholds the trial ran against, linear scale.
    pub thresholds: Vec<f64>,
}

impl TrialRecord {
    pub fn outcome(&self, method: Method) -> Option<&DesignOutcome> {
        self.outcomes.iter().find(|(m, _)| *m == method).map(|(_, o)| o)
    }

    /// Smallest relative SINR slack over users, for a feasible outcome.
    pub fn min_sinr_margin(&self, method: Method) -> Option<f64> {
        let outcome = self.outcome(method)?;
        let sinrs = outcome.per_user_sinr.as_ref()?;
        sinrs
            .iter()
            .zip(&self.thresholds)
            .map(|(s, g)| (s - g) / g)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
    }
}

/// Rebuilds the geometry and channel knowledge of one trial.
///
/// Deterministic in the campaign seed and the trial counter, so designs
/// recorded by a campaign can be re-evaluated after the fact.
pub fn trial_inputs(
    config: &CampaignConfig,
    trial: usize,
) -> Result<(Geometry, ChannelKnowledge), HarnessError> {
    let seed = trial_seed(config.net.seed, trial);
    let geometry = match (&config.rrh_positions, &config.ms_positions) {
        (Some(rrh), Some(ms)) => Geometry {
            cp_position: [0.0, 0.0],
            rrh_positions: rrh.clone(),
            ms_positions: ms.clone(),
        },
        _ => sample_geometry(&config.net, &config.channel, &mut purpose_rng(seed, 0))?,
    };
    let realization =
        sample_channels(&geometry, &config.net, &config.channel, &mut purpose_rng(seed, 1))?;
    let knowledge = crate::netmodel::apply_estimation_error(
        &realization,
        &config.net,
        config.net.gamma_ch,
        config.channel.noise(),
        &mut purpose_rng(seed, 2),
    )?;
    Ok((geometry, knowledge))
}

/// Runs one trial: sample, bound, then every selected method.
pub fn run_trial(config: &CampaignConfig, trial: usize) -> Result<TrialRecord, HarnessError> {
    config.validate()?;
    let seed = trial_seed(config.net.seed, trial);
    let (geometry, knowledge) = trial_inputs(config, trial)?;
    let thresholds = config.net.gamma_lin();

    let started = Instant::now();
    let bound_report = bound::lower_bound(&knowledge, &thresholds)?;
    let bound_runtime_s = started.elapsed().as_secs_f64();

    let mut outcomes = Vec::with_capacity(config.methods.len());
    for method in &config.methods {
        let mut rng = purpose_rng(seed, 3 + method.canonical_index());
        let outcome = match method {
            Method::Ao => sdr_design::alternating_optimization(&knowledge, &thresholds, &mut rng),
            Method::Tsm => sdr_design::total_snr_max(&knowledge, &thresholds, &mut rng),
            Method::MrcZf => classic_design::mrc_zf(&knowledge, &thresholds, &mut rng),
            Method::SvdZf => classic_design::svd_zf(&knowledge, &thresholds),
        };
        outcomes.push((*method, outcome));
    }
    Ok(TrialRecord {
        trial,
        seed,
        geometry_digest: geometry_digest(&geometry),
        outcomes,
        bound: bound_report,
        bound_runtime_s,
        thresholds,
    })
}

/// Aggregate of one method over a campaign.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    pub p_success_pct: f64,
    /// Mean power over feasible trials; absent when none were feasible.
    pub mean_power_dbw: Option<f64>,
    pub mean_runtime_s: f64,
}

/// Aggregates of a whole campaign.
#[derive(Debug, Clone)]
pub struct CampaignSummary {
    pub config: CampaignConfig,
    pub methods: Vec<MethodSummary>,
    /// Percentage of trials with every margin positive.
    pub bound_success_pct: f64,
    /// Mean bound over trials with a finite bound.
    pub mean_bound_dbw: Option<f64>,
    pub mean_bound_runtime_s: f64,
    /// Share of rank-1 extractions with eigenvalue ratio at most 1e-3,
    /// over all relaxation-based solves; absent when none ran.
    pub rank1_success_pct: Option<f64>,
}

fn dbw(watts: f64) -> f64 {
    10.0 * watts.log10()
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn mean_power_dbw(watts: &[f64], domain: AveragingDomain) -> Option<f64> {
    match domain {
        AveragingDomain::Linear => mean(watts).map(dbw),
        AveragingDomain::Db => {
            let dbs: Vec<f64> = watts.iter().map(|w| dbw(*w)).collect();
            mean(&dbs)
        }
    }
}

/// Ratio threshold under which an extraction counts as rank-1 in the
/// campaign statistics.
pub const RANK1_SUCCESS_RATIO: f64 = 1e-3;

/// Pure aggregation of trial records.
pub fn summarize(config: &CampaignConfig, records: &[TrialRecord]) -> CampaignSummary {
    let trials = records.len().max(1) as f64;
    let mut methods = Vec::with_capacity(config.methods.len());
    for method in &config.methods {
        let outcomes: Vec<&DesignOutcome> =
            records.iter().filter_map(|r| r.outcome(*method)).collect();
        let feasible_powers: Vec<f64> = outcomes
            .iter()
            .filter(|o| o.feasible)
            .filter_map(|o| o.total_power)
            .collect();
        let runtimes: Vec<f64> = outcomes.iter().map(|o| o.wall_clock).collect();
        methods.push(MethodSummary {
            method: *method,
            p_success_pct: 100.0 * feasible_powers.len() as f64 / trials,
            mean_power_dbw: mean_power_dbw(&feasible_powers, config.averaging),
            mean_runtime_s: mean(&runtimes).unwrap_or(0.0),
        });
    }
    let bound_values: Vec<f64> =
        records.iter().filter_map(|r| r.bound.total_bound).collect();
    let bound_runtimes: Vec<f64> = records.iter().map(|r| r.bound_runtime_s).collect();
    let mut rank1_total = 0usize;
    let mut rank1_ok = 0usize;
    for r in records {
        for (_, o) in &r.outcomes {
            rank1_total += o.rank1_stats.len();
            rank1_ok += o.rank1_stats.iter().filter(|v| **v <= RANK1_SUCCESS_RATIO).count();
        }
    }
    CampaignSummary {
        config: config.clone(),
        methods,
        bound_success_pct: 100.0 * bound_values.len() as f64 / trials,
        mean_bound_dbw: mean_power_dbw(&bound_values, config.averaging),
        mean_bound_runtime_s: mean(&bound_runtimes).unwrap_or(0.0),
        rank1_success_pct: if rank1_total > 0 {
            Some(100.0 * rank1_ok as f64 / rank1_total as f64)
        } else {
            None
        },
    }
}

/// Runs every trial of a campaign, in parallel, and aggregates.
pub fn run_campaign(
    config: &CampaignConfig,
) -> Result<(CampaignSummary, Vec<TrialRecord>), HarnessError> {
    config.validate()?;
    let records: Vec<TrialRecord> = (0..config.net.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect::<Result<_, _>>()?;
    Ok((summarize(config, &records), records))
}

/// One long-format sweep row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    /// Method name, or "bound" for the floor pseudo-method.
    pub method: String,
    pub mean_power_dbw: Option<f64>,
    pub p_success_pct: f64,
    pub mean_runtime_s: f64,
}

/// Runs one campaign per value of the swept parameter.
pub fn sweep(
    config: &CampaignConfig,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<Vec<SweepRow>, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    let mut rows = Vec::new();
    for &value in values {
        let cfg = with_parameter(config, parameter, value)?;
        let (summary, _) = run_campaign(&cfg)?;
        for m in &summary.methods {
            rows.push(SweepRow {
                parameter,
                value,
                method: m.method.name().to_string(),
                mean_power_dbw: m.mean_power_dbw,
                p_success_pct: m.p_success_pct,
                mean_runtime_s: m.mean_runtime_s,
            });
        }
        rows.push(SweepRow {
            parameter,
            value,
            method: "bound".to_string(),
            mean_power_dbw: summary.mean_bound_dbw,
            p_success_pct: summary.bound_success_pct,
            mean_runtime_s: summary.mean_bound_runtime_s,
        });
    }
    Ok(rows)
}

/// Nine-significant-digit float formatting shared by every output file.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn json_num(x: f64) -> String {
    fmt_float(x)
}

fn json_opt(x: Option<f64>) -> String {
    x.map(json_num).unwrap_or_else(|| "null".to_string())
}

fn json_f64_array(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| json_num(*v)).collect();
    format!("[{}]", parts.join(", "))
}

fn config_json(config: &CampaignConfig, indent: &str) -> String {
    let mut s = String::new();
    let p = |s: &mut String, line: &str| {
        s.push_str(indent);
        s.push_str(line);
        s.push('\n');
    };
    p(&mut s, "{");
    let i2 = format!("{indent}  ");
    let mut body = String::new();
    let b = |body: &mut String, line: String| {
        body.push_str(&i2);
        body.push_str(&line);
        body.push('\n');
    };
    b(&mut body, format!("\"K\": {},", config.net.k));
    b(&mut body, format!("\"N\": {},", config.net.n));
    b(&mut body, format!("\"L\": {},", config.net.l));
    b(&mut body, format!("\"M\": {},", config.net.m));
    b(&mut body, format!("\"gamma_db\": {},", json_f64_array(&config.net.gamma_db)));
    b(&mut body, format!("\"gamma_ch\": {},", json_num(config.net.gamma_ch)));
    b(&mut body, format!("\"trials\": {},", config.net.trials));
    b(&mut body, format!("\"seed\": {},", config.net.seed));
    b(&mut body, format!("\"cell_radius_m\": {},", json_num(config.channel.cell_radius_m)));
    b(&mut body, format!("\"min_distance_m\": {},", json_num(config.channel.min_distance_m)));
    b(&mut body, format!("\"bandwidth_hz\": {},", json_num(config.channel.bandwidth_hz)));
    b(&mut body, format!("\"nsd_dbm_hz\": {},", json_num(config.channel.nsd_dbm_hz)));
    b(&mut body, format!("\"nf_rrh_db\": {},", json_num(config.channel.nf_rrh_db)));
    b(&mut body, format!("\"nf_ms_db\": {},", json_num(config.channel.nf_ms_db)));
    b(
        &mut body,
        format!("\"antenna_gains_dbi\": {},", json_f64_array(&config.channel.antenna_gains_dbi)),
    );
    b(
        &mut body,
        format!("\"shadowing_std_db\": {},", json_f64_array(&config.channel.shadowing_std_db)),
    );
    b(&mut body, format!("\"averaging_domain\": \"{}\",", config.averaging.name()));
    let methods: Vec<String> =
        config.methods.iter().map(|m| format!("\"{}\"", m.name())).collect();
    if let (Some(rrh), Some(ms)) = (&config.rrh_positions, &config.ms_positions) {
        b(&mut body, format!("\"methods\": [{}],", methods.join(", ")));
        let fmt_pos = |ps: &[[f64; 2]]| -> String {
            let parts: Vec<String> =
                ps.iter().map(|p| format!("[{}, {}]", json_num(p[0]), json_num(p[1]))).collect();
            format!("[{}]", parts.join(", "))
        };
        b(&mut body, format!("\"rrh_positions\": {},", fmt_pos(rrh)));
        b(&mut body, format!("\"ms_positions\": {}", fmt_pos(ms)));
    } else {
        b(&mut body, format!("\"methods\": [{}]", methods.join(", ")));
    }
    s.push_str(&body);
    s.push_str(indent);
    s.push('}');
    s
}

/// Renders `summary.json`.
pub fn summary_json(summary: &CampaignSummary) -> String {
    let mut s = String::new();
    s.push_str("{\n");
    s.push_str("  \"config\": ");
    s.push_str(config_json(&summary.config, "  ").trim_start());
    s.push_str(",\n");
    s.push_str("  \"methods\": {\n");
    for (i, m) in summary.methods.iter().enumerate() {
        let comma = if i + 1 < summary.methods.len() { "," } else { "" };
        s.push_str(&format!(
            "    \"{}\": {{\"p_success_pct\": {}, \"mean_power_dbw\": {}, \"mean_runtime_s\": {}}}{}\n",
            m.method.name(),
            json_num(m.p_success_pct),
            json_opt(m.mean_power_dbw),
            json_num(m.mean_runtime_s),
            comma
        ));
    }
    s.push_str("  },\n");
    s.push_str(&format!(
        "  \"bound\": {{\"success_pct\": {}, \"mean_dbw\": {}, \"mean_runtime_s\": {}}},\n",
        json_num(summary.bound_success_pct),
        json_opt(summary.mean_bound_dbw),
        json_num(summary.mean_bound_runtime_s),
    ));
    s.push_str(&format!(
        "  \"rank1_success_pct\": {}\n",
        json_opt(summary.rank1_success_pct)
    ));
    s.push_str("}\n");
    s
}

/// CSV column order of `trials.csv`.
pub const TRIALS_HEADER: &str =
    "trial,method,feasible,power_dbw,min_sinr_margin,runtime_s,rank1_ratio";

/// Renders `trials.csv`: one row per trial per method, then a `bound`
/// pseudo-method row carrying the floor for that trial.
///
/// The file is a deterministic function of the campaign config and
/// seed, so re-runs can be compared byte for byte.  The `runtime_s`
/// column is therefore left empty: wall-clock measurements vary between
/// runs and live in `summary.json` as per-method means instead.
pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut s = String::with_capacity(64 * records.len() + 64);
    s.push_str(TRIALS_HEADER);
    s.push('\n');
    for r in records {
        for (method, outcome) in &r.outcomes {
            let power = outcome.total_power.filter(|_| outcome.feasible).map(dbw);
            let worst_ratio = outcome
                .rank1_stats
                .iter()
                .copied()
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
            s.push_str(&format!(
                "{},{},{},{},{},,{}\n",
                r.trial,
                method.name(),
                outcome.feasible,
                fmt_opt(power),
                fmt_opt(r.min_sinr_margin(*method)),
                fmt_opt(worst_ratio),
            ));
        }
        s.push_str(&format!(
            "{},bound,{},{},,,\n",
            r.trial,
            r.bound.feasible,
            fmt_opt(r.bound.total_bound.map(dbw)),
        ));
    }
    s
}

/// CSV column order of `sweep.csv`.
pub const SWEEP_HEADER: &str = "parameter,value,method,mean_power_dbw,p_success_pct,mean_runtime_s";

/// Renders `sweep.csv` in long format.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.parameter.name(),
            fmt_float(r.value),
            r.method,
            fmt_opt(r.mean_power_dbw),
            fmt_float(r.p_success_pct),
            fmt_float(r.mean_runtime_s),
        ));
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `summary.json` and `trials.csv` into `out_dir`.
pub fn emit_outputs(
    summary: &CampaignSummary,
    records: &[TrialRecord],
    out_dir: &Path,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    write_file(&out_dir.join("summary.json"), &summary_json(summary))?;
    write_file(&out_dir.join("trials.csv"), &trials_csv(records))
}

/// Writes `sweep.csv` into `out_dir`.
pub fn emit_sweep(rows: &[SweepRow], out_dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    write_file(&out_dir.join("sweep.csv"), &sweep_csv(rows))
}
