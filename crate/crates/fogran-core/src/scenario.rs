//! World-state generation for one optimization-and-transmission block:
//! eRRH/UE geometry, MIMO channels, cache contents and file requests, all
//! deterministic functions of a configuration and a seed.
//!
//! Configuration files are flat `key = value` text (see `ScenarioConfig`
//! for the key set; `#` starts a comment). Cache contents can be pinned
//! with an explicit 0/1 matrix block, one `cache_override_<j>` row per
//! requested file.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::CMat;
use crate::{real, Complex, Real};

/// All constants of one scenario. Rates are Mb/s, powers W, distances km,
/// bandwidth MHz, noise density dBm/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig<T> {
    pub num_errh: usize,
    pub num_ue: usize,
    pub antennas_errh: usize,
    pub antennas_ue: usize,
    pub streams: usize,
    pub library_size: usize,
    pub subfiles_per_file: usize,
    /// File size in Mbit; each file splits into `subfiles_per_file` equal parts.
    pub file_size: T,
    pub qos_rate: T,
    pub subfile_rate_cap: T,
    /// Per-eRRH fronthaul capacity, Mb/s.
    pub fronthaul_capacity: Vec<T>,
    /// Per-eRRH maximum transmit power, W.
    pub tx_power_budget: Vec<T>,
    pub active_power: T,
    pub sleep_power: T,
    pub amplifier_slope: T,
    /// Fronthaul power per delivered Mb/s, W.
    pub fronthaul_slope: T,
    pub cache_fraction: T,
    pub bandwidth: T,
    pub noise_psd: T,
    pub shadowing_std: T,
    pub inter_errh_distance: T,
    /// Rate/power trade-off weight in the design objective.
    pub eta: T,
    pub eps1: T,
    pub eps2: T,
    pub eps3: T,
    pub eps4: T,
    pub tau1: T,
    pub tau2: T,
    pub rng_seed: u64,
    /// UE placement radius around the first eRRH, km.
    pub ue_radius: T,
    /// Precoder block energy above which an eRRH counts as serving a UE, W.
    pub assoc_threshold: T,
    /// Use the literal `1/ln(1 + tau1^-2)` constant in the eRRH-activity
    /// weight update instead of the default `1/ln(1 + tau2^-1)`.
    pub c2_literal: bool,
    pub errh_positions: Option<Vec<(T, T)>>,
    /// Pinned UE requests (file indices, 0-based, distinct).
    pub requests_override: Option<Vec<usize>>,
    /// Pinned cache flags `[ue][errh][subfile]` for the requested files.
    pub cache_override: Option<Vec<Vec<Vec<bool>>>>,
}

impl<T: Real> Default for ScenarioConfig<T> {
    fn default() -> Self {
        Self {
            num_errh: 7,
            num_ue: 3,
            antennas_errh: 5,
            antennas_ue: 2,
            streams: 2,
            library_size: 6,
            subfiles_per_file: 2,
            file_size: real(80.0),
            qos_rate: real(0.1),
            subfile_rate_cap: real(40.0),
            fronthaul_capacity: vec![real(50.0); 7],
            tx_power_budget: vec![dbm_to_watts(24.0); 7],
            active_power: real(84.0),
            sleep_power: real(56.0),
            amplifier_slope: real(2.8),
            fronthaul_slope: real(5.0),
            cache_fraction: real(0.5),
            bandwidth: real(10.0),
            noise_psd: real(-174.0),
            shadowing_std: real(10.0),
            inter_errh_distance: real(0.3),
            eta: real(1e-4),
            eps1: real(1e-3),
            eps2: real(1e-2),
            eps3: real(1e-2),
            eps4: real(1e-2),
            tau1: real(1e-5),
            tau2: real(1e-3),
            rng_seed: 1,
            ue_radius: real(0.05),
            assoc_threshold: real(1e-6),
            c2_literal: false,
            errh_positions: None,
            requests_override: None,
            cache_override: None,
        }
    }
}

pub fn dbm_to_watts<T: Real>(dbm: f64) -> T {
    real::<T>(10f64.powf((dbm - 30.0) / 10.0))
}

impl<T: Real> ScenarioConfig<T> {
    pub fn total_tx_antennas(&self) -> usize {
        self.num_errh * self.antennas_errh
    }

    /// Subfiles each eRRH can hold.
    pub fn cache_capacity_subfiles(&self) -> usize {
        let total = real::<T>((self.library_size * self.subfiles_per_file) as f64);
        (self.cache_fraction * total).floor().to_usize().unwrap_or(0)
    }

    /// Noise variance per receive antenna in watts.
    pub fn noise_variance(&self) -> T {
        let hz = self.bandwidth.to_f64().unwrap_or(0.0) * 1e6;
        let dbm = self.noise_psd.to_f64().unwrap_or(f64::NEG_INFINITY) + 10.0 * hz.log10();
        dbm_to_watts(dbm)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |keys: &[&str], msg: &str| {
            Err(ConfigError::Invariant {
                keys: keys.iter().map(|s| s.to_string()).collect(),
                msg: msg.to_string(),
            })
        };
        for (key, v) in [
            ("num_errh", self.num_errh),
            ("num_ue", self.num_ue),
            ("antennas_errh", self.antennas_errh),
            ("antennas_ue", self.antennas_ue),
            ("streams", self.streams),
            ("library_size", self.library_size),
            ("subfiles_per_file", self.subfiles_per_file),
        ] {
            if v < 1 {
                return inv(&[key], "count must be at least 1");
            }
        }
        if self.cache_fraction < T::zero() || self.cache_fraction > T::one() {
            return inv(&["cache_fraction"], "must lie in [0, 1]");
        }
        if self.qos_rate > self.subfile_rate_cap {
            return inv(&["qos_rate", "subfile_rate_cap"], "qos_rate must not exceed subfile_rate_cap");
        }
        if self.streams > self.antennas_ue.min(self.antennas_errh) {
            return inv(&["streams", "antennas_ue", "antennas_errh"], "streams must not exceed min antenna count");
        }
        if !(self.sleep_power < self.active_power) {
            return inv(&["sleep_power", "active_power"], "sleep_power must be below active_power");
        }
        for (key, v) in [
            ("file_size", self.file_size),
            ("qos_rate", self.qos_rate),
            ("active_power", self.active_power),
            ("sleep_power", self.sleep_power),
            ("amplifier_slope", self.amplifier_slope),
            ("fronthaul_slope", self.fronthaul_slope),
            ("ue_radius", self.ue_radius),
            ("assoc_threshold", self.assoc_threshold),
        ] {
            if !(v >= T::zero()) || !v.is_finite() {
                return inv(&[key], "must be finite and non-negative");
            }
        }
        for (key, v) in [
            ("bandwidth", self.bandwidth),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("eps3", self.eps3),
            ("eps4", self.eps4),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return inv(&[key], "must be finite and positive");
            }
        }
        if self.fronthaul_capacity.len() != self.num_errh {
            return inv(&["fronthaul_capacity", "num_errh"], "needs one capacity per eRRH");
        }
        if self.tx_power_budget.len() != self.num_errh {
            return inv(&["tx_power_budget", "num_errh"], "needs one budget per eRRH");
        }
        if self.fronthaul_capacity.iter().chain(self.tx_power_budget.iter()).any(|v| !(*v >= T::zero())) {
            return inv(&["fronthaul_capacity", "tx_power_budget"], "must be non-negative");
        }
        if self.num_ue > self.library_size {
            return inv(&["num_ue", "library_size"], "distinct requests need num_ue <= library_size");
        }
        if let Some(pos) = &self.errh_positions {
            if pos.len() != self.num_errh {
                return inv(&["errh_positions", "num_errh"], "needs one position per eRRH");
            }
            if pos.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                return inv(&["errh_positions"], "positions must be finite");
            }
        }
        if let Some(reqs) = &self.requests_override {
            if reqs.len() != self.num_ue {
                return inv(&["requests", "num_ue"], "needs one request per UE");
            }
            if reqs.iter().any(|&f| f >= self.library_size) {
                return inv(&["requests", "library_size"], "request outside the library");
            }
            let mut sorted = reqs.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != reqs.len() {
                return inv(&["requests"], "requests must be distinct");
            }
        }
        if let Some(cache) = &self.cache_override {
            if self.requests_override.is_none() {
                return inv(&["cache_override_1", "requests"], "cache override requires pinned requests");
            }
            if cache.len() != self.num_ue {
                return inv(&["cache_override_1"], "needs one row per requested file");
            }
            let cap = self.cache_capacity_subfiles();
            for i in 0..self.num_errh {
                let mut count = 0usize;
                for row in cache {
                    if row.len() != self.num_errh || row[i].len() != self.subfiles_per_file {
                        return inv(&["cache_override_1"], "override shape must be [num_errh] x [subfiles_per_file]");
                    }
                    count += row[i].iter().filter(|&&b| b).count();
                }
                if count > cap {
                    return inv(
                        &["cache_override_1", "cache_fraction"],
                        "override stores more subfiles than the cache capacity",
                    );
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Syntax { line: usize, msg: String },
    UnknownKey(String),
    BadValue { key: String, msg: String },
    Invariant { keys: Vec<String>, msg: String },
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(msg) => write!(f, "config i/o error: {msg}"),
            ConfigError::Syntax { line, msg } => write!(f, "config syntax error on line {line}: {msg}"),
            ConfigError::UnknownKey(key) => write!(f, "unknown config key `{key}`"),
            ConfigError::BadValue { key, msg } => write!(f, "bad value for `{key}`: {msg}"),
            ConfigError::Invariant { keys, msg } => {
                write!(f, "invalid config ({}): {msg}", keys.join(", "))
            }
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse_usize(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.trim().parse().map_err(|_| ConfigError::BadValue { key: key.into(), msg: format!("`{v}` is not a count") })
}

fn parse_real<T: Real>(key: &str, v: &str) -> Result<T, ConfigError> {
    let f: f64 = v
        .trim()
        .parse()
        .map_err(|_| ConfigError::BadValue { key: key.into(), msg: format!("`{v}` is not a number") })?;
    Ok(real(f))
}

fn parse_real_list<T: Real>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split_whitespace().map(|tok| parse_real(key, tok)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(ConfigError::BadValue { key: key.into(), msg: format!("`{other}` is not a boolean") }),
    }
}

/// Applies one `key = value` override. Used by the file parser and by the
/// CLI's `--set key=value` flags.
pub fn apply_override<T: Real>(cfg: &mut ScenarioConfig<T>, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "num_errh" => {
            cfg.num_errh = parse_usize(key, value)?;
            // keep the per-eRRH vectors in step when they were uniform
            if cfg.fronthaul_capacity.len() != cfg.num_errh {
                let c = cfg.fronthaul_capacity.first().copied().unwrap_or_else(|| real(50.0));
                cfg.fronthaul_capacity = vec![c; cfg.num_errh];
            }
            if cfg.tx_power_budget.len() != cfg.num_errh {
                let p = cfg.tx_power_budget.first().copied().unwrap_or_else(|| dbm_to_watts(24.0));
                cfg.tx_power_budget = vec![p; cfg.num_errh];
            }
        }
        "num_ue" => cfg.num_ue = parse_usize(key, value)?,
        "antennas_errh" => cfg.antennas_errh = parse_usize(key, value)?,
        "antennas_ue" => cfg.antennas_ue = parse_usize(key, value)?,
        "streams" => cfg.streams = parse_usize(key, value)?,
        "library_size" => cfg.library_size = parse_usize(key, value)?,
        "subfiles_per_file" => cfg.subfiles_per_file = parse_usize(key, value)?,
        "file_size" => cfg.file_size = parse_real(key, value)?,
        "qos_rate" => cfg.qos_rate = parse_real(key, value)?,
        "subfile_rate_cap" => cfg.subfile_rate_cap = parse_real(key, value)?,
        "fronthaul_capacity" => {
            let list = parse_real_list(key, value)?;
            cfg.fronthaul_capacity = match list.len() {
                1 => vec![list[0]; cfg.num_errh],
                _ => list,
            };
        }
        "tx_power_budget" => {
            let list = parse_real_list(key, value)?;
            cfg.tx_power_budget = match list.len() {
                1 => vec![list[0]; cfg.num_errh],
                _ => list,
            };
        }
        "tx_power_budget_dbm" => {
            let list: Vec<T> = parse_real_list(key, value)?;
            let w: Vec<T> = list.iter().map(|d| dbm_to_watts(d.to_f64().unwrap())).collect();
            cfg.tx_power_budget = match w.len() {
                1 => vec![w[0]; cfg.num_errh],
                _ => w,
            };
        }
        "active_power" => cfg.active_power = parse_real(key, value)?,
        "sleep_power" => cfg.sleep_power = parse_real(key, value)?,
        "amplifier_slope" => cfg.amplifier_slope = parse_real(key, value)?,
        "fronthaul_slope" => cfg.fronthaul_slope = parse_real(key, value)?,
        "cache_fraction" => cfg.cache_fraction = parse_real(key, value)?,
        "bandwidth" => cfg.bandwidth = parse_real(key, value)?,
        "noise_psd" => cfg.noise_psd = parse_real(key, value)?,
        "shadowing_std" => cfg.shadowing_std = parse_real(key, value)?,
        "inter_errh_distance" => cfg.inter_errh_distance = parse_real(key, value)?,
        "eta" => cfg.eta = parse_real(key, value)?,
        "eps1" => cfg.eps1 = parse_real(key, value)?,
        "eps2" => cfg.eps2 = parse_real(key, value)?,
        "eps3" => cfg.eps3 = parse_real(key, value)?,
        "eps4" => cfg.eps4 = parse_real(key, value)?,
        "tau1" => cfg.tau1 = parse_real(key, value)?,
        "tau2" => cfg.tau2 = parse_real(key, value)?,
        "rng_seed" => {
            cfg.rng_seed = value
                .trim()
                .parse()
                .map_err(|_| ConfigError::BadValue { key: key.into(), msg: "not a seed".into() })?
        }
        "ue_radius" => cfg.ue_radius = parse_real(key, value)?,
        "assoc_threshold" => cfg.assoc_threshold = parse_real(key, value)?,
        "c2_literal" => cfg.c2_literal = parse_bool(key, value)?,
        "errh_positions" => {
            let flat: Vec<T> = parse_real_list(key, value)?;
            if flat.len() % 2 != 0 {
                return Err(ConfigError::BadValue { key: key.into(), msg: "needs x y pairs".into() });
            }
            cfg.errh_positions = Some(flat.chunks(2).map(|p| (p[0], p[1])).collect());
        }
        "requests" => {
            let ids: Result<Vec<usize>, _> = value.split_whitespace().map(|tok| parse_usize(key, tok)).collect();
            let ids = ids?;
            if ids.iter().any(|&f| f == 0) {
                return Err(ConfigError::BadValue { key: key.into(), msg: "file ids are 1-based".into() });
            }
            cfg.requests_override = Some(ids.into_iter().map(|f| f - 1).collect());
        }
        _ if key.starts_with("cache_override_") => {
            let idx: usize = key["cache_override_".len()..]
                .parse()
                .map_err(|_| ConfigError::UnknownKey(key.into()))?;
            if idx == 0 {
                return Err(ConfigError::BadValue { key: key.into(), msg: "row indices are 1-based".into() });
            }
            let mut row: Vec<Vec<bool>> = Vec::new();
            for tok in value.split_whitespace() {
                let flags: Result<Vec<bool>, _> = tok
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(ConfigError::BadValue {
                            key: key.into(),
                            msg: format!("`{other}` is not a 0/1 cache flag"),
                        }),
                    })
                    .collect();
                row.push(flags?);
            }
            let cache = cfg.cache_override.get_or_insert_with(Vec::new);
            if cache.len() < idx {
                cache.resize(idx, Vec::new());
            }
            cache[idx - 1] = row;
        }
        _ => return Err(ConfigError::UnknownKey(key.into())),
    }
    Ok(())
}

/// Parses configuration text. Unset keys keep their defaults; the result
/// is validated before being returned.
pub fn parse_config<T: Real>(text: &str) -> Result<ScenarioConfig<T>, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: lineno + 1, msg: "expected `key = value`".into() });
        };
        apply_override(&mut cfg, key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config<T: Real>(path: &std::path::Path) -> Result<ScenarioConfig<T>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// eRRH and UE coordinates in km.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology<T> {
    pub errh_positions: Vec<(T, T)>,
    pub ue_positions: Vec<(T, T)>,
}

impl<T: Real> Topology<T> {
    pub fn distance(&self, ue: usize, errh: usize) -> T {
        let (ux, uy) = self.ue_positions[ue];
        let (ex, ey) = self.errh_positions[errh];
        ((ux - ex) * (ux - ex) + (uy - ey) * (uy - ey)).sqrt()
    }
}

#[derive(Debug, Clone)]
pub enum ScenarioError {
    Config(ConfigError),
    Layout(String),
}

impl std::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioError::Config(e) => write!(f, "{e}"),
            ScenarioError::Layout(msg) => write!(f, "layout error: {msg}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

impl From<ConfigError> for ScenarioError {
    fn from(e: ConfigError) -> Self {
        ScenarioError::Config(e)
    }
}

pub(crate) fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

const STAGE_TOPOLOGY: u64 = 1;
const STAGE_CHANNELS: u64 = 2;
const STAGE_CACHE: u64 = 3;
pub(crate) const STAGE_INIT: u64 = 5;

/// Places the eRRHs (one central plus a six-cell ring at the configured
/// spacing, unless explicit positions are given) and drops the UEs
/// uniformly on a disk around the first eRRH.
pub fn build_topology<T: Real>(cfg: &ScenarioConfig<T>, seed: u64) -> Result<Topology<T>, ScenarioError> {
    let errh_positions: Vec<(T, T)> = match &cfg.errh_positions {
        Some(p) => p.clone(),
        None => {
            if cfg.num_errh != 7 {
                return Err(ScenarioError::Layout(format!(
                    "default seven-cell layout needs num_errh = 7 (got {}); supply errh_positions",
                    cfg.num_errh
                )));
            }
            let spacing = cfg.inter_errh_distance;
            let mut pos = vec![(T::zero(), T::zero())];
            for k in 0..6 {
                let angle = real::<T>(std::f64::consts::PI / 3.0 * k as f64);
                pos.push((spacing * angle.cos(), spacing * angle.sin()));
            }
            pos
        }
    };
    let mut rng = stage_rng(seed, STAGE_TOPOLOGY);
    let (cx, cy) = errh_positions[0];
    let two_pi = real::<T>(std::f64::consts::TAU);
    let ue_positions = (0..cfg.num_ue)
        .map(|_| {
            let r = cfg.ue_radius * real::<T>(rng.gen::<f64>()).sqrt();
            let phi = two_pi * real::<T>(rng.gen::<f64>());
            (cx + r * phi.cos(), cy + r * phi.sin())
        })
        .collect();
    Ok(Topology { errh_positions, ue_positions })
}

/// Flat-fading channels from every eRRH to every UE, stacked per UE as an
/// `N_u x (K_R N_r)` matrix with per-eRRH column blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet<T> {
    pub channels: Vec<CMat<T>>,
    /// Per-antenna noise variance, W.
    pub noise_variance: T,
    pub antennas_errh: usize,
}

impl<T: Real> ChannelSet<T> {
    /// Noise covariance of one UE (sigma^2 I).
    pub fn noise_covariance(&self, antennas_ue: usize) -> CMat<T> {
        CMat::scaled_identity(antennas_ue, self.noise_variance)
    }
}

/// Path loss in dB at distance `d_km`.
pub fn path_loss_db<T: Real>(d_km: T) -> T {
    real::<T>(140.7) + real::<T>(36.7) * d_km.log10()
}

pub fn draw_channels<T: Real>(
    cfg: &ScenarioConfig<T>,
    topo: &Topology<T>,
    seed: u64,
) -> (ChannelSet<T>, Vec<String>) {
    let mut rng = stage_rng(seed, STAGE_CHANNELS);
    let mut warnings = Vec::new();
    let n_r = cfg.antennas_errh;
    let n_u = cfg.antennas_ue;
    let std_dev = cfg.shadowing_std.to_f64().unwrap_or(0.0);
    let shadow_dist = (std_dev > 0.0).then(|| Normal::new(0.0, std_dev).unwrap());
    let min_dist = real::<T>(1e-3);
    let half = real::<T>(0.5);
    let channels = (0..cfg.num_ue)
        .map(|k| {
            let mut h = CMat::zeros(n_u, cfg.total_tx_antennas());
            for i in 0..cfg.num_errh {
                let mut d = topo.distance(k, i);
                if d < min_dist {
                    warnings.push(format!("UE {} to eRRH {} distance clamped to 1 m", k + 1, i + 1));
                    d = min_dist;
                }
                let shadow = shadow_dist.as_ref().map_or(0.0, |n| n.sample(&mut rng));
                let gain_db = -path_loss_db(d) + real::<T>(shadow);
                let amp = (real::<T>(10.0).powf(gain_db / real::<T>(10.0))).sqrt();
                for r in 0..n_u {
                    for c in 0..n_r {
                        let re: f64 = rng.sample(rand_distr::StandardNormal);
                        let im: f64 = rng.sample(rand_distr::StandardNormal);
                        h[(r, i * n_r + c)] = Complex::new(
                            amp * real::<T>(re) * half.sqrt(),
                            amp * real::<T>(im) * half.sqrt(),
                        );
                    }
                }
            }
            h
        })
        .collect();
    (
        ChannelSet { channels, noise_variance: cfg.noise_variance(), antennas_errh: n_r },
        warnings,
    )
}

/// Cache contents and requests for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheState {
    /// Requested file per UE, 0-based, pairwise distinct.
    pub requests: Vec<usize>,
    /// Stored (file, subfile) pairs per eRRH.
    pub stored: Vec<Vec<(usize, usize)>>,
    /// `cached[i][k][m]`: eRRH `i` holds subfile `m` of UE `k`'s file.
    pub cached: Vec<Vec<Vec<bool>>>,
    pub capacity_subfiles: usize,
}

impl CacheState {
    pub fn is_cached(&self, errh: usize, ue: usize, subfile: usize) -> bool {
        self.cached[errh][ue][subfile]
    }

    /// Copy with every cache emptied (requests unchanged).
    pub fn without_cache(&self) -> CacheState {
        let mut out = self.clone();
        for s in out.stored.iter_mut() {
            s.clear();
        }
        for per_errh in out.cached.iter_mut() {
            for per_ue in per_errh.iter_mut() {
                for flag in per_ue.iter_mut() {
                    *flag = false;
                }
            }
        }
        out
    }
}

pub fn draw_cache_and_requests<T: Real>(cfg: &ScenarioConfig<T>, seed: u64) -> CacheState {
    let mut rng = stage_rng(seed, STAGE_CACHE);
    let m_sub = cfg.subfiles_per_file;
    let requests = match &cfg.requests_override {
        Some(r) => r.clone(),
        None => {
            let mut picked: Vec<usize> = Vec::with_capacity(cfg.num_ue);
            while picked.len() < cfg.num_ue {
                let f = rng.gen_range(0..cfg.library_size);
                if !picked.contains(&f) {
                    picked.push(f);
                }
            }
            picked
        }
    };
    let capacity = cfg.cache_capacity_subfiles();
    let stored: Vec<Vec<(usize, usize)>> = match &cfg.cache_override {
        Some(rows) => (0..cfg.num_errh)
            .map(|i| {
                let mut s = Vec::new();
                for (k, row) in rows.iter().enumerate() {
                    for m in 0..m_sub {
                        if row[i][m] {
                            s.push((requests[k], m));
                        }
                    }
                }
                s
            })
            .collect(),
        None => (0..cfg.num_errh)
            .map(|_| {
                let mut pool: Vec<(usize, usize)> = (0..cfg.library_size)
                    .flat_map(|f| (0..m_sub).map(move |m| (f, m)))
                    .collect();
                // partial Fisher-Yates: the first `capacity` entries are the draw
                for j in 0..capacity.min(pool.len()) {
                    let pick = rng.gen_range(j..pool.len());
                    pool.swap(j, pick);
                }
                pool.truncate(capacity.min(pool.len()));
                pool.sort_unstable();
                pool
            })
            .collect(),
    };
    let cached = (0..cfg.num_errh)
        .map(|i| {
            (0..cfg.num_ue)
                .map(|k| (0..m_sub).map(|m| stored[i].contains(&(requests[k], m))).collect())
                .collect()
        })
        .collect();
    CacheState { requests, stored, cached, capacity_subfiles: capacity }
}

/// Immutable bundle of everything one optimization block needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub cfg: ScenarioConfig<T>,
    pub topology: Topology<T>,
    pub channels: ChannelSet<T>,
    pub cache: CacheState,
    pub warnings: Vec<String>,
}

impl<T: Real> Scenario<T> {
    pub fn num_pairs(&self) -> usize {
        self.cfg.num_ue * self.cfg.subfiles_per_file
    }

    /// (UE, subfile) pairs in stream order. Requests are distinct, so each
    /// requested (file, subfile) corresponds to exactly one pair.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.cfg.subfiles_per_file;
        (0..self.cfg.num_ue).flat_map(move |k| (0..m).map(move |mm| (k, mm)))
    }

    pub fn pair_index(&self, ue: usize, subfile: usize) -> usize {
        ue * self.cfg.subfiles_per_file + subfile
    }

    /// Copy with the caches emptied (the no-caching baseline world).
    pub fn without_cache(&self) -> Scenario<T> {
        let mut s = self.clone();
        s.cache = self.cache.without_cache();
        s
    }

    pub fn with_eta(&self, eta: T) -> Scenario<T> {
        let mut s = self.clone();
        s.cfg.eta = eta;
        s
    }

    pub fn with_fronthaul_capacity(&self, c: T) -> Scenario<T> {
        let mut s = self.clone();
        s.cfg.fronthaul_capacity = vec![c; self.cfg.num_errh];
        s
    }
}

pub fn build_scenario<T: Real>(cfg: &ScenarioConfig<T>) -> Result<Scenario<T>, ScenarioError> {
    build_scenario_with_seed(cfg, cfg.rng_seed)
}

pub fn build_scenario_with_seed<T: Real>(
    cfg: &ScenarioConfig<T>,
    seed: u64,
) -> Result<Scenario<T>, ScenarioError> {
    cfg.validate()?;
    let topology = build_topology(cfg, seed)?;
    let (channels, warnings) = draw_channels(cfg, &topology, seed);
    let cache = draw_cache_and_requests(cfg, seed);
    Ok(Scenario { cfg: cfg.clone(), topology, channels, cache, warnings })
}
