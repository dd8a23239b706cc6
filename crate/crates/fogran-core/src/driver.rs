//! Orchestration of the joint design: the initializer that produces a
//! feasible starting point, the triple loop (inner successive convex
//! steps on the precoders, middle alternation with the delivery-rate LP,
//! outer reweighting), and the comparison baselines.

use std::time::Instant;

use rand::Rng;

use crate::convexsolver::{solve_qcqp, SolverError, SolverSettings};
use crate::linalg::CMat;
use crate::model::{
    all_rates, association_from_precoders, check_feasibility, fronthaul_rates_all, objective_p1,
    total_power, Association, DdrAllocation, FeasibilityReport, PowerBreakdown, PrecoderStack,
};
use crate::scenario::{stage_rng, Scenario, STAGE_INIT};
use crate::subproblems::{
    build_coefficients, build_feasibility_qcqp, build_precoder_qcqp, build_surrogates,
    inner_objective, middle_objective, solve_rate_lp, ReweightState, StackEmbedding,
};
use crate::{real, Complex, Real};

/// Which design variant a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Joint association / rate / precoder design with local caching.
    Joint,
    /// Joint design with the caches emptied.
    JointNoCache,
    /// Precoder-only baseline: every eRRH serves every UE, association
    /// weights frozen at zero.
    PrecoderOnly,
}

impl Scheme {
    pub fn cli_name(&self) -> &'static str {
        match self {
            Scheme::Joint => "alg1-c",
            Scheme::JointNoCache => "alg1-nc",
            Scheme::PrecoderOnly => "spdc",
        }
    }

    pub fn from_cli_name(name: &str) -> Option<Scheme> {
        match name {
            "alg1-c" => Some(Scheme::Joint),
            "alg1-nc" => Some(Scheme::JointNoCache),
            "spdc" => Some(Scheme::PrecoderOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct DriverMode {
    pin_association_full: bool,
    pin_mu_zero: bool,
}

impl DriverMode {
    fn for_scheme(scheme: Scheme) -> Self {
        match scheme {
            Scheme::Joint | Scheme::JointNoCache => {
                Self { pin_association_full: false, pin_mu_zero: false }
            }
            Scheme::PrecoderOnly => Self { pin_association_full: true, pin_mu_zero: true },
        }
    }
}

/// Loop caps and solver settings for one run.
#[derive(Debug, Clone)]
pub struct AlgorithmSettings<T> {
    pub solver: SolverSettings<T>,
    pub max_outer: usize,
    pub max_middle: usize,
    pub max_inner: usize,
    /// Passes of the initializer's ratio-improvement loop.
    pub max_init: usize,
}

impl<T: Real> Default for AlgorithmSettings<T> {
    fn default() -> Self {
        let mut solver = SolverSettings::default();
        // run-level accuracy: the monotone-acceptance guards keep the loop
        // invariants exact, so the subproblem gap can sit at 1e-8
        solver.gap_tol = real(1e-8);
        solver.t_multiplier = real(50.0);
        Self { solver, max_outer: 30, max_middle: 20, max_inner: 12, max_init: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopLevel {
    Init,
    Inner,
    Middle,
    Outer,
}

impl LoopLevel {
    pub fn name(&self) -> &'static str {
        match self {
            LoopLevel::Init => "init",
            LoopLevel::Inner => "inner",
            LoopLevel::Middle => "middle",
            LoopLevel::Outer => "outer",
        }
    }
}

/// One objective evaluation somewhere in the loop nest.
#[derive(Debug, Clone)]
pub struct LogRecord<T> {
    pub level: LoopLevel,
    pub outer: usize,
    pub middle: usize,
    pub inner: usize,
    pub objective: T,
    /// Worst violation of the design constraints at this iterate.
    pub max_violation: T,
    pub millis: f64,
}

#[derive(Debug, Clone, Default)]
pub struct IterateLog<T> {
    pub records: Vec<LogRecord<T>>,
}

impl<T: Real> IterateLog<T> {
    fn push(
        &mut self,
        level: LoopLevel,
        outer: usize,
        middle: usize,
        inner: usize,
        objective: T,
        max_violation: T,
        millis: f64,
    ) {
        self.records.push(LogRecord { level, outer, middle, inner, objective, max_violation, millis });
    }

    pub fn series(&self, level: LoopLevel) -> Vec<&LogRecord<T>> {
        self.records.iter().filter(|r| r.level == level).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    IterationLimit,
    /// A subproblem solver failed; the result holds the last good iterate.
    SolverStalled(String),
}

/// Final point and diagnostics of one run.
#[derive(Debug, Clone)]
pub struct RunResult<T> {
    pub scheme: Scheme,
    pub sum_rate: T,
    pub power: PowerBreakdown<T>,
    pub objective: T,
    pub association: Association,
    pub fronthaul: Vec<T>,
    pub rates: DdrAllocation<T>,
    pub stack: PrecoderStack<T>,
    pub log: IterateLog<T>,
    pub status: RunStatus,
    pub feasibility: FeasibilityReport<T>,
    pub outer_iters: usize,
    pub middle_iters: usize,
    pub inner_iters: usize,
}

#[derive(Debug, Clone)]
pub enum RunError {
    /// No feasible starting point exists at the QoS floor.
    InitInfeasible(String),
    Solver(SolverError),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::InitInfeasible(msg) => write!(f, "initializer found no feasible point: {msg}"),
            RunError::Solver(e) => write!(f, "solver error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<SolverError> for RunError {
    fn from(e: SolverError) -> Self {
        RunError::Solver(e)
    }
}

/// Feasible starting point: scaled random precoders improved by the
/// max-min ratio program, the weights at the scaled stack, and the rates
/// of the first LP.
#[derive(Debug, Clone)]
pub struct InitPoint<T> {
    pub stack: PrecoderStack<T>,
    pub weights: ReweightState<T>,
    pub rates: DdrAllocation<T>,
    /// Smallest achievable-rate to delivery-rate ratio at the output.
    pub min_ratio: T,
    pub records: Vec<LogRecord<T>>,
}

fn relative_change<T: Real>(new: T, prev: T) -> T {
    (new - prev).abs() / prev.abs().max(real(1e-12))
}

/// Association used for the LP's binary fronthaul rows: pinned all-ones in
/// the baseline, otherwise read off the precoders with a margin below the
/// reporting threshold so blocks drifting toward the threshold are already
/// accounted for.
fn lp_row_association<T: Real>(
    stack: &PrecoderStack<T>,
    scen: &Scenario<T>,
    mode: DriverMode,
) -> Association {
    if mode.pin_association_full {
        Association::all_ones(scen.cfg.num_ue, scen.cfg.num_errh)
    } else {
        association_from_precoders(stack, scen.cfg.assoc_threshold * real::<T>(0.1))
    }
}

fn min_ratio<T: Real>(stack: &PrecoderStack<T>, rates: &DdrAllocation<T>, scen: &Scenario<T>) -> T {
    all_rates(stack, scen)
        .into_iter()
        .zip(rates.rates.iter())
        .map(|(g, &r)| g / r.max(real(1e-12)))
        .fold(T::infinity(), T::min)
}

fn init_point<T: Real>(
    scen: &Scenario<T>,
    mode: DriverMode,
    settings: &AlgorithmSettings<T>,
) -> Result<InitPoint<T>, RunError> {
    let cfg = &scen.cfg;
    let mut rng = stage_rng(cfg.rng_seed, STAGE_INIT);
    let emb = StackEmbedding::for_scenario(scen);
    let started = Instant::now();

    // random stack, each stream scaled so no eRRH exceeds its share of the
    // power budget (budget split evenly over the streams)
    let per_stream: Vec<T> = cfg
        .tx_power_budget
        .iter()
        .map(|&p| p / real::<T>((cfg.subfiles_per_file * cfg.num_ue) as f64))
        .collect();
    let half = real::<T>(0.5);
    let mats: Vec<CMat<T>> = (0..scen.num_pairs())
        .map(|_| {
            let raw = CMat::from_fn(cfg.total_tx_antennas(), cfg.streams, |_, _| {
                let re: f64 = rng.sample(rand_distr::StandardNormal);
                let im: f64 = rng.sample(rand_distr::StandardNormal);
                Complex::new(real::<T>(re) * half.sqrt(), real::<T>(im) * half.sqrt())
            });
            let tmp = PrecoderStack::from_mats(vec![raw], 1, 1, cfg.antennas_errh);
            let worst = (0..cfg.num_errh)
                .map(|i| tmp.block_energy(0, 0, i) / per_stream[i].max(real(1e-30)))
                .fold(T::zero(), T::max);
            tmp.mats()[0].scale((T::one() / worst.max(real(1e-30))).sqrt())
        })
        .collect();
    let mut stack = PrecoderStack::from_mats(mats, cfg.num_ue, cfg.subfiles_per_file, cfg.antennas_errh);

    let weights = ReweightState::from_stack(&stack, scen, mode.pin_mu_zero);
    // no rates exist yet; the LP only reads the energy-side coefficients
    let floor_rates = DdrAllocation::uniform(cfg.num_ue, cfg.subfiles_per_file, cfg.qos_rate);
    let coeffs = build_coefficients(&weights, &floor_rates, scen, &stack);
    let g = all_rates(&stack, scen);
    let assoc_rows = lp_row_association(&stack, scen, mode);
    let lp = solve_rate_lp(scen, &coeffs, &weights, &stack, &g, &assoc_rows, &settings.solver)
        .map_err(|e| match e {
            SolverError::InfeasibleStart => {
                RunError::InitInfeasible("delivery-rate program infeasible at the QoS floor".into())
            }
            other => RunError::Solver(other),
        })?;
    let mut rates = lp.rates;
    let mut records = Vec::new();

    // ratio-improvement passes, retried once with reduced rates if needed
    for attempt in 0..2 {
        let mut ratio = min_ratio(&stack, &rates, scen);
        records.push(LogRecord {
            level: LoopLevel::Init,
            outer: attempt + 1,
            middle: 0,
            inner: 1,
            objective: ratio,
            max_violation: check_feasibility(&stack, &rates, scen, real(1e-6)).max_violation(),
            millis: started.elapsed().as_secs_f64() * 1e3,
        });
        for n in 2..=settings.max_init {
            let t0 = Instant::now();
            let coeffs = build_coefficients(&weights, &rates, scen, &stack);
            let surrogates = build_surrogates(&stack, scen);
            let (prob, _, _t_idx) =
                build_feasibility_qcqp(&surrogates, &coeffs, &rates, scen, &settings.solver)?;
            let mut x0 = emb.embed(&stack);
            x0.push(ratio * (T::one() - real::<T>(1e-3)) - real::<T>(1e-9));
            let sol = match solve_qcqp(&prob, &settings.solver, &x0) {
                Ok(s) => s,
                Err(SolverError::InfeasibleStart) => break,
                Err(e) => return Err(e.into()),
            };
            let cand = emb.unembed_with(&sol.x, cfg.antennas_errh);
            let new_ratio = min_ratio(&cand, &rates, scen);
            if !(new_ratio > ratio) {
                break;
            }
            stack = cand;
            records.push(LogRecord {
                level: LoopLevel::Init,
                outer: attempt + 1,
                middle: 0,
                inner: n,
                objective: new_ratio,
                max_violation: check_feasibility(&stack, &rates, scen, real(1e-6)).max_violation(),
                millis: t0.elapsed().as_secs_f64() * 1e3,
            });
            let done = relative_change(new_ratio, ratio) <= cfg.eps4;
            ratio = new_ratio;
            if done {
                break;
            }
        }
        if ratio >= T::one() {
            // rates were set at the raw random stack; re-solve at the
            // improved one so the main loop starts from full-value rates
            let coeffs = build_coefficients(&weights, &rates, scen, &stack);
            let g = all_rates(&stack, scen);
            let assoc_rows = lp_row_association(&stack, scen, mode);
            if let Ok(lp) =
                solve_rate_lp(scen, &coeffs, &weights, &stack, &g, &assoc_rows, &settings.solver)
            {
                rates = lp.rates;
            }
            let ratio = min_ratio(&stack, &rates, scen);
            if ratio >= T::one() {
                return Ok(InitPoint { stack, weights, rates, min_ratio: ratio, records });
            }
        }
        if attempt == 0 {
            // pull the delivery rates toward the QoS floor and try again
            let shrink = ratio.min(T::one()) * real::<T>(0.95);
            for r in rates.rates.iter_mut() {
                *r = (*r * shrink).max(cfg.qos_rate);
            }
        }
    }
    let ratio = min_ratio(&stack, &rates, scen);
    if ratio >= T::one() {
        Ok(InitPoint { stack, weights, rates, min_ratio: ratio, records })
    } else {
        Err(RunError::InitInfeasible(format!(
            "achievable rates reach only a {ratio:.3e} fraction of the requested rates at the QoS floor"
        )))
    }
}

/// Finds a feasible starting point for the joint design.
pub fn algorithm2_init<T: Real>(
    scen: &Scenario<T>,
    settings: &AlgorithmSettings<T>,
) -> Result<InitPoint<T>, RunError> {
    init_point(scen, DriverMode::for_scheme(Scheme::Joint), settings)
}

fn run_from_init<T: Real>(
    scen: &Scenario<T>,
    mode: DriverMode,
    scheme: Scheme,
    init: InitPoint<T>,
    settings: &AlgorithmSettings<T>,
) -> RunResult<T> {
    let cfg = &scen.cfg;
    let eta = cfg.eta;
    let mut stack = init.stack;
    let mut weights = init.weights;
    let mut rates = init.rates;
    let mut log = IterateLog { records: init.records };
    let mut status = RunStatus::IterationLimit;

    let report_assoc = |stack: &PrecoderStack<T>| -> Association {
        if mode.pin_association_full {
            Association::all_ones(cfg.num_ue, cfg.num_errh)
        } else {
            association_from_precoders(stack, cfg.assoc_threshold)
        }
    };
    let viol = |stack: &PrecoderStack<T>, rates: &DdrAllocation<T>| -> T {
        check_feasibility(stack, rates, scen, real(1e-6)).max_violation()
    };

    let mut p1_prev = objective_p1(&stack, &report_assoc(&stack), &rates, scen);
    log.push(LoopLevel::Outer, 1, 0, 0, p1_prev, viol(&stack, &rates), 0.0);
    let mut outer_iters = 1;
    let mut middle_iters = 0;
    let mut inner_iters = 0;

    'outer: for p in 2..=settings.max_outer + 1 {
        let coeffs0 = build_coefficients(&weights, &rates, scen, &stack);
        let mut p2_prev = middle_objective(&coeffs0, &stack, &rates, eta);
        log.push(LoopLevel::Middle, p, 1, 0, p2_prev, viol(&stack, &rates), 0.0);
        for kappa in 2..=settings.max_middle + 1 {
            // inner loop: successive convex steps on the precoders at fixed rates
            let coeffs = build_coefficients(&weights, &rates, scen, &stack);
            let mut p3_prev = inner_objective(&coeffs, &stack, eta);
            log.push(LoopLevel::Inner, p, kappa, 1, p3_prev, viol(&stack, &rates), 0.0);
            for n in 2..=settings.max_inner + 1 {
                let t0 = Instant::now();
                let surrogates = build_surrogates(&stack, scen);
                let built = build_precoder_qcqp(&surrogates, &coeffs, &rates, scen, &settings.solver);
                let (prob, emb) = match built {
                    Ok(v) => v,
                    Err(e) => {
                        status = RunStatus::SolverStalled(e.to_string());
                        break 'outer;
                    }
                };
                let sol = match solve_qcqp(&prob, &settings.solver, &emb.embed(&stack)) {
                    Ok(s) => s,
                    Err(e) => {
                        status = RunStatus::SolverStalled(e.to_string());
                        break 'outer;
                    }
                };
                let cand = emb.unembed_with(&sol.x, cfg.antennas_errh);
                let p3_new = inner_objective(&coeffs, &cand, eta);
                // accept only non-increasing steps; the exact minorant step
                // never increases, so a rise means solver noise
                if !(p3_new <= p3_prev) {
                    break;
                }
                stack = cand;
                inner_iters += 1;
                log.push(
                    LoopLevel::Inner,
                    p,
                    kappa,
                    n,
                    p3_new,
                    viol(&stack, &rates),
                    t0.elapsed().as_secs_f64() * 1e3,
                );
                let done = relative_change(p3_new, p3_prev) <= cfg.eps3;
                p3_prev = p3_new;
                if done {
                    break;
                }
            }
            // rate step at the new precoders
            let t0 = Instant::now();
            let coeffs = build_coefficients(&weights, &rates, scen, &stack);
            let g = all_rates(&stack, scen);
            let assoc_rows = lp_row_association(&stack, scen, mode);
            let lp = match solve_rate_lp(scen, &coeffs, &weights, &stack, &g, &assoc_rows, &settings.solver)
            {
                Ok(v) => v,
                Err(e) => {
                    status = RunStatus::SolverStalled(e.to_string());
                    break 'outer;
                }
            };
            let coeffs_new = build_coefficients(&weights, &lp.rates, scen, &stack);
            let p2_new = middle_objective(&coeffs_new, &stack, &lp.rates, eta);
            if !(p2_new >= p2_prev) {
                break; // the alternation can no longer improve this objective
            }
            rates = lp.rates;
            middle_iters += 1;
            log.push(
                LoopLevel::Middle,
                p,
                kappa,
                0,
                p2_new,
                viol(&stack, &rates),
                t0.elapsed().as_secs_f64() * 1e3,
            );
            let done = relative_change(p2_new, p2_prev) <= cfg.eps2;
            p2_prev = p2_new;
            if done {
                break;
            }
        }
        weights.update(&stack);
        let p1_new = objective_p1(&stack, &report_assoc(&stack), &rates, scen);
        outer_iters += 1;
        log.push(LoopLevel::Outer, p, 0, 0, p1_new, viol(&stack, &rates), 0.0);
        if relative_change(p1_new, p1_prev) <= cfg.eps1 {
            status = RunStatus::Converged;
            break;
        }
        p1_prev = p1_new;
    }

    // closing rate pass at the final precoders: keeps the reported pair
    // consistent with the final association's fronthaul rows (idempotent
    // when nothing moved since the last rate step)
    {
        let coeffs = build_coefficients(&weights, &rates, scen, &stack);
        let g = all_rates(&stack, scen);
        let assoc_rows = lp_row_association(&stack, scen, mode);
        if let Ok(lp) = solve_rate_lp(scen, &coeffs, &weights, &stack, &g, &assoc_rows, &settings.solver) {
            rates = lp.rates;
        }
    }

    let association = report_assoc(&stack);
    let power = total_power(&stack, &association, &rates, scen);
    let objective = objective_p1(&stack, &association, &rates, scen);
    let fronthaul = fronthaul_rates_all(&association, &rates, &scen.cache, cfg.num_errh);
    let feasibility = check_feasibility(&stack, &rates, scen, real(1e-5));
    RunResult {
        scheme,
        sum_rate: rates.sum(),
        power,
        objective,
        association,
        fronthaul,
        rates,
        stack,
        log,
        status,
        feasibility,
        outer_iters,
        middle_iters,
        inner_iters,
    }
}

/// Joint design from a previously computed starting point.
pub fn algorithm1<T: Real>(
    scen: &Scenario<T>,
    init: InitPoint<T>,
    settings: &AlgorithmSettings<T>,
) -> RunResult<T> {
    run_from_init(scen, DriverMode::for_scheme(Scheme::Joint), Scheme::Joint, init, settings)
}

/// Precoder-only baseline: every eRRH serves every UE, the association
/// weights stay at zero (no sparsity pressure), and the fronthaul capacity
/// is enforced with the all-ones association.
pub fn baseline_spdc<T: Real>(
    scen: &Scenario<T>,
    settings: &AlgorithmSettings<T>,
) -> Result<RunResult<T>, RunError> {
    let mode = DriverMode::for_scheme(Scheme::PrecoderOnly);
    let init = init_point(scen, mode, settings)?;
    Ok(run_from_init(scen, mode, Scheme::PrecoderOnly, init, settings))
}

/// Joint design on the cache-less copy of the scenario.
pub fn baseline_nocache<T: Real>(
    scen: &Scenario<T>,
    settings: &AlgorithmSettings<T>,
) -> Result<RunResult<T>, RunError> {
    let bare = scen.without_cache();
    let mode = DriverMode::for_scheme(Scheme::JointNoCache);
    let init = init_point(&bare, mode, settings)?;
    Ok(run_from_init(&bare, mode, Scheme::JointNoCache, init, settings))
}

/// Runs one scheme end to end on a scenario.
pub fn run_scheme<T: Real>(
    scen: &Scenario<T>,
    scheme: Scheme,
    settings: &AlgorithmSettings<T>,
) -> Result<RunResult<T>, RunError> {
    match scheme {
        Scheme::Joint => {
            let mode = DriverMode::for_scheme(scheme);
            let init = init_point(scen, mode, settings)?;
            Ok(run_from_init(scen, mode, scheme, init, settings))
        }
        Scheme::JointNoCache => baseline_nocache(scen, settings),
        Scheme::PrecoderOnly => baseline_spdc(scen, settings),
    }
}
