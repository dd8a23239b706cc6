//! Experiment harness: eta and fronthaul-capacity sweeps with paired
//! Monte-Carlo trials, aggregate statistics, and plot-ready CSV output.
//!
//! Within one trial index every scheme and every grid point consumes the
//! identical channel and cache draw, so scheme comparisons are paired.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use crate::driver::{run_scheme, AlgorithmSettings, LoopLevel, RunResult, Scheme};
use crate::scenario::{build_scenario_with_seed, Scenario, ScenarioConfig};
use crate::{real, Real};

/// One sweep: grids over the rate/power weight and the fronthaul capacity,
/// a trial count, and the schemes to compare.
#[derive(Debug, Clone)]
pub struct SweepSpec<T> {
    pub etas: Vec<T>,
    pub fronthaul_mbps: Vec<T>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub seed_base: u64,
    pub out_dir: PathBuf,
    /// Emit a convergence trace for the first grid point of each trial.
    pub trace: bool,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

impl<T: Real> SweepSpec<T> {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.etas.is_empty() || self.fronthaul_mbps.is_empty() || self.schemes.is_empty() {
            return Err(HarnessError::Parse("sweep needs non-empty eta, capacity and scheme lists".into()));
        }
        if self.trials < 1 {
            return Err(HarnessError::Parse("sweep needs at least one trial".into()));
        }
        Ok(())
    }
}

/// Parses a sweep description in the same flat `key = value` format as the
/// scenario configuration. Keys: `etas`, `fronthaul_mbps`, `trials`,
/// `schemes`, `seed_base`, `out`, `trace`, `threads`.
pub fn parse_sweep_spec<T: Real>(text: &str) -> Result<SweepSpec<T>, HarnessError> {
    let mut spec = SweepSpec {
        etas: vec![real(1e-6)],
        fronthaul_mbps: vec![real(50.0)],
        trials: 20,
        schemes: vec![Scheme::Joint, Scheme::JointNoCache, Scheme::PrecoderOnly],
        seed_base: 1,
        out_dir: PathBuf::from("results"),
        trace: false,
        threads: 0,
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(HarnessError::Parse(format!("line {}: expected `key = value`", lineno + 1)));
        };
        apply_sweep_override(&mut spec, key.trim(), value.trim())?;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn apply_sweep_override<T: Real>(
    spec: &mut SweepSpec<T>,
    key: &str,
    value: &str,
) -> Result<(), HarnessError> {
    let parse_list = |v: &str| -> Result<Vec<T>, HarnessError> {
        v.split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map(real)
                    .map_err(|_| HarnessError::Parse(format!("`{tok}` is not a number")))
            })
            .collect()
    };
    match key {
        "etas" => spec.etas = parse_list(value)?,
        "fronthaul_mbps" => spec.fronthaul_mbps = parse_list(value)?,
        "trials" => {
            spec.trials = value
                .parse()
                .map_err(|_| HarnessError::Parse(format!("`{value}` is not a trial count")))?
        }
        "schemes" => {
            spec.schemes = value
                .split_whitespace()
                .map(|name| {
                    Scheme::from_cli_name(name)
                        .ok_or_else(|| HarnessError::Parse(format!("unknown scheme `{name}`")))
                })
                .collect::<Result<_, _>>()?
        }
        "seed_base" => {
            spec.seed_base = value
                .parse()
                .map_err(|_| HarnessError::Parse(format!("`{value}` is not a seed")))?
        }
        "out" => spec.out_dir = PathBuf::from(value),
        "trace" => spec.trace = matches!(value, "true" | "1" | "yes"),
        "threads" => {
            spec.threads = value
                .parse()
                .map_err(|_| HarnessError::Parse(format!("`{value}` is not a thread count")))?
        }
        _ => return Err(HarnessError::Parse(format!("unknown sweep key `{key}`"))),
    }
    Ok(())
}

#[derive(Debug)]
pub enum HarnessError {
    Io(String),
    Parse(String),
    Scenario(String),
}

impl std::fmt::Display for HarnessError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HarnessError::Io(msg) => write!(f, "i/o error: {msg}"),
            HarnessError::Parse(msg) => write!(f, "sweep spec error: {msg}"),
            HarnessError::Scenario(msg) => write!(f, "scenario error: {msg}"),
        }
    }
}

impl std::error::Error for HarnessError {}

/// One run's worth of per-trial output.
#[derive(Debug, Clone)]
pub struct TrialRecord<T> {
    pub scheme: Scheme,
    pub eta: T,
    pub fronthaul_mbps: T,
    pub trial: usize,
    pub ok: bool,
    pub status: String,
    pub sum_rate: T,
    pub p_busy: T,
    pub p_total: T,
    pub objective: T,
    pub outer_iters: usize,
    pub middle_iters: usize,
    pub inner_iters: usize,
    pub active_pairs: usize,
    pub active_errhs: usize,
    pub max_violation: T,
}

/// Mean/stddev aggregate over the successful trials of one grid point.
#[derive(Debug, Clone)]
pub struct AggregateRow<T> {
    pub scheme: Scheme,
    pub eta: T,
    pub fronthaul_mbps: T,
    pub trials_ok: usize,
    pub failures: usize,
    pub sum_rate_mean: T,
    pub sum_rate_std: T,
    pub p_busy_mean: T,
    pub p_busy_std: T,
    pub objective_mean: T,
    pub objective_std: T,
    pub outer_iters_mean: T,
    pub middle_iters_mean: T,
    pub inner_iters_mean: T,
    pub active_pairs_mean: T,
    pub active_errhs_mean: T,
}

pub const TRIALS_HEADER: &str = "scheme,eta,fronthaul_mbps,trial,status,sum_rate_mbps,p_busy_w,p_total_w,objective,outer_iters,middle_iters,inner_iters,active_pairs,active_errhs,max_violation";
pub const AGGREGATE_HEADER: &str = "scheme,eta,fronthaul_mbps,trials_ok,failures,sum_rate_mean,sum_rate_std,p_busy_mean,p_busy_std,objective_mean,objective_std,outer_iters_mean,middle_iters_mean,inner_iters_mean,active_pairs_mean,active_errhs_mean";
pub const CONVERGENCE_HEADER: &str = "section,outer,middle,inner,objective,max_violation,millis";

/// Builds the world of one trial. Channels and caches depend only on the
/// configuration's geometry keys and the derived seed, so adjusting `eta`
/// or the fronthaul capacity afterwards keeps the draw identical.
pub fn trial_scenario<T: Real>(
    cfg: &ScenarioConfig<T>,
    seed_base: u64,
    trial: usize,
) -> Result<Scenario<T>, HarnessError> {
    build_scenario_with_seed(cfg, seed_base.wrapping_add(trial as u64))
        .map_err(|e| HarnessError::Scenario(e.to_string()))
}

/// Everything a sweep produced, already aggregated and written to disk.
#[derive(Debug)]
pub struct SweepOutcome<T> {
    pub trials: Vec<TrialRecord<T>>,
    pub aggregates: Vec<AggregateRow<T>>,
    pub files: Vec<PathBuf>,
}

/// Runs the full sweep grid with a worker pool over trials and writes
/// `aggregate.csv`, `trials.csv` and optional convergence traces.
pub fn run_sweep<T: Real>(
    spec: &SweepSpec<T>,
    cfg: &ScenarioConfig<T>,
    settings: &AlgorithmSettings<T>,
) -> Result<SweepOutcome<T>, HarnessError> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out_dir)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", spec.out_dir.display())))?;
    let results = Mutex::new(Vec::<(TrialRecord<T>, Option<RunResult<T>>)>::new());
    let next = AtomicUsize::new(0);
    let workers = if spec.threads > 0 {
        spec.threads
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
    .min(spec.trials)
    .max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let trial = next.fetch_add(1, Ordering::Relaxed);
                if trial >= spec.trials {
                    break;
                }
                let base = match trial_scenario(cfg, spec.seed_base, trial) {
                    Ok(s) => s,
                    Err(e) => {
                        let mut lock = results.lock().unwrap();
                        for &scheme in &spec.schemes {
                            for &eta in &spec.etas {
                                for &c in &spec.fronthaul_mbps {
                                    lock.push((
                                        failure_record(scheme, eta, c, trial, &e.to_string()),
                                        None,
                                    ));
                                }
                            }
                        }
                        continue;
                    }
                };
                for &eta in &spec.etas {
                    for &c in &spec.fronthaul_mbps {
                        let world = base.with_eta(eta).with_fronthaul_capacity(c);
                        for &scheme in &spec.schemes {
                            let outcome = run_scheme(&world, scheme, settings);
                            let entry = match outcome {
                                Ok(run) => {
                                    let rec = trial_record(scheme, eta, c, trial, &run);
                                    let keep_trace = spec.trace
                                        && eta == spec.etas[0]
                                        && c == spec.fronthaul_mbps[0]
                                        && scheme == spec.schemes[0];
                                    (rec, keep_trace.then_some(run))
                                }
                                Err(e) => (failure_record(scheme, eta, c, trial, &e.to_string()), None),
                            };
                            results.lock().unwrap().push(entry);
                        }
                    }
                }
            });
        }
    });

    let mut collected = results.into_inner().unwrap();
    collected.sort_by(|a, b| {
        let ka = (a.0.scheme.cli_name(), a.0.eta.to_f64().unwrap_or(0.0), a.0.fronthaul_mbps.to_f64().unwrap_or(0.0), a.0.trial);
        let kb = (b.0.scheme.cli_name(), b.0.eta.to_f64().unwrap_or(0.0), b.0.fronthaul_mbps.to_f64().unwrap_or(0.0), b.0.trial);
        ka.partial_cmp(&kb).unwrap()
    });
    let mut files = Vec::new();
    let trials: Vec<TrialRecord<T>> = collected.iter().map(|(r, _)| r.clone()).collect();
    for (rec, run) in &collected {
        if let Some(run) = run {
            let path = spec.out_dir.join(format!("convergence_{}.csv", rec.trial));
            emit_convergence(run, &path)?;
            files.push(path);
        }
    }
    let aggregates = aggregate(&trials);
    let trials_path = spec.out_dir.join("trials.csv");
    write_atomic(&trials_path, &trials_csv(&trials))?;
    files.push(trials_path);
    let agg_path = spec.out_dir.join("aggregate.csv");
    write_atomic(&agg_path, &aggregate_csv(&aggregates))?;
    files.push(agg_path);
    Ok(SweepOutcome { trials, aggregates, files })
}

fn trial_record<T: Real>(
    scheme: Scheme,
    eta: T,
    c: T,
    trial: usize,
    run: &RunResult<T>,
) -> TrialRecord<T> {
    TrialRecord {
        scheme,
        eta,
        fronthaul_mbps: c,
        trial,
        ok: true,
        status: format!("{:?}", run.status).split('(').next().unwrap_or("?").to_string(),
        sum_rate: run.sum_rate,
        p_busy: run.power.busy,
        p_total: run.power.total,
        objective: run.objective,
        outer_iters: run.outer_iters,
        middle_iters: run.middle_iters,
        inner_iters: run.inner_iters,
        active_pairs: run.association.active_pairs(),
        active_errhs: run.power.active.iter().filter(|&&b| b).count(),
        max_violation: run.feasibility.max_violation(),
    }
}

fn failure_record<T: Real>(scheme: Scheme, eta: T, c: T, trial: usize, msg: &str) -> TrialRecord<T> {
    TrialRecord {
        scheme,
        eta,
        fronthaul_mbps: c,
        trial,
        ok: false,
        status: format!("failed: {msg}"),
        sum_rate: T::nan(),
        p_busy: T::nan(),
        p_total: T::nan(),
        objective: T::nan(),
        outer_iters: 0,
        middle_iters: 0,
        inner_iters: 0,
        active_pairs: 0,
        active_errhs: 0,
        max_violation: T::nan(),
    }
}

fn mean_std<T: Real>(values: &[T]) -> (T, T) {
    if values.is_empty() {
        return (T::nan(), T::nan());
    }
    let n = real::<T>(values.len() as f64);
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Groups successful trials by (scheme, eta, capacity).
pub fn aggregate<T: Real>(trials: &[TrialRecord<T>]) -> Vec<AggregateRow<T>> {
    let mut keys: Vec<(Scheme, T, T)> = Vec::new();
    for t in trials {
        let key = (t.scheme, t.eta, t.fronthaul_mbps);
        if !keys.iter().any(|k| k.0 == key.0 && k.1 == key.1 && k.2 == key.2) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scheme, eta, c)| {
            let group: Vec<&TrialRecord<T>> = trials
                .iter()
                .filter(|t| t.scheme == scheme && t.eta == eta && t.fronthaul_mbps == c)
                .collect();
            let ok: Vec<&&TrialRecord<T>> = group.iter().filter(|t| t.ok).collect();
            let col = |f: &dyn Fn(&TrialRecord<T>) -> T| -> Vec<T> { ok.iter().map(|t| f(t)).collect() };
            let (sum_rate_mean, sum_rate_std) = mean_std(&col(&|t| t.sum_rate));
            let (p_busy_mean, p_busy_std) = mean_std(&col(&|t| t.p_busy));
            let (objective_mean, objective_std) = mean_std(&col(&|t| t.objective));
            let (outer_iters_mean, _) = mean_std(&col(&|t| real(t.outer_iters as f64)));
            let (middle_iters_mean, _) = mean_std(&col(&|t| real(t.middle_iters as f64)));
            let (inner_iters_mean, _) = mean_std(&col(&|t| real(t.inner_iters as f64)));
            let (active_pairs_mean, _) = mean_std(&col(&|t| real(t.active_pairs as f64)));
            let (active_errhs_mean, _) = mean_std(&col(&|t| real(t.active_errhs as f64)));
            AggregateRow {
                scheme,
                eta,
                fronthaul_mbps: c,
                trials_ok: ok.len(),
                failures: group.len() - ok.len(),
                sum_rate_mean,
                sum_rate_std,
                p_busy_mean,
                p_busy_std,
                objective_mean,
                objective_std,
                outer_iters_mean,
                middle_iters_mean,
                inner_iters_mean,
                active_pairs_mean,
                active_errhs_mean,
            }
        })
        .collect()
}

fn trials_csv<T: Real>(trials: &[TrialRecord<T>]) -> String {
    let mut out = String::from(TRIALS_HEADER);
    out.push('\n');
    for t in trials {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            t.scheme.cli_name(),
            t.eta,
            t.fronthaul_mbps,
            t.trial,
            t.status,
            t.sum_rate,
            t.p_busy,
            t.p_total,
            t.objective,
            t.outer_iters,
            t.middle_iters,
            t.inner_iters,
            t.active_pairs,
            t.active_errhs,
            t.max_violation
        ));
    }
    out
}

fn aggregate_csv<T: Real>(rows: &[AggregateRow<T>]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.scheme.cli_name(),
            r.eta,
            r.fronthaul_mbps,
            r.trials_ok,
            r.failures,
            r.sum_rate_mean,
            r.sum_rate_std,
            r.p_busy_mean,
            r.p_busy_std,
            r.objective_mean,
            r.objective_std,
            r.outer_iters_mean,
            r.middle_iters_mean,
            r.inner_iters_mean,
            r.active_pairs_mean,
            r.active_errhs_mean
        ));
    }
    out
}

/// Writes one run's objective traces as three CSV sections: the inner
/// precoder objective per step, the middle alternation objective per pass,
/// and the outer design objective per reweighting.
pub fn emit_convergence<T: Real>(run: &RunResult<T>, path: &Path) -> Result<(), HarnessError> {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for level in [LoopLevel::Inner, LoopLevel::Middle, LoopLevel::Outer] {
        for r in run.log.series(level) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                level.name(),
                r.outer,
                r.middle,
                r.inner,
                r.objective,
                r.max_violation,
                r.millis
            ));
        }
    }
    write_atomic(path, &out)
}

/// Writes via a sibling temp file and rename, so a failed write never
/// leaves a partial file at the destination.
pub fn write_atomic(path: &Path, content: &str) -> Result<(), HarnessError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, content).map_err(|e| HarnessError::Io(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        HarnessError::Io(format!("{}: {e}", path.display()))
    })
}
