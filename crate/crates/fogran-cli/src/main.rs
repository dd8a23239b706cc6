//! Command-line harness: single runs, initializer checks and Monte-Carlo
//! sweeps over the rate/power weight and the fronthaul capacity.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fogran_core::driver::{algorithm2_init, run_scheme, AlgorithmSettings, RunStatus, Scheme};
use fogran_core::harness::{
    apply_sweep_override, emit_convergence, parse_sweep_spec, run_sweep, SweepSpec,
};
use fogran_core::scenario::{
    apply_override, build_scenario, load_config, ScenarioConfig,
};

#[derive(Parser)]
#[command(
    name = "fogran",
    version,
    about = "Downlink simulator and joint user-association / delivery-rate / precoding optimizer for cache-enabled fog radio access networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario configuration file (flat key = value text)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Rate/power trade-off weight override
    #[arg(long)]
    eta: Option<f64>,
    /// Per-eRRH fronthaul capacity override, Mb/s
    #[arg(long)]
    fronthaul_mbps: Option<f64>,
    /// Generic `key=value` config override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<ScenarioConfig<f64>, String> {
        let mut cfg = match &self.config {
            Some(path) => load_config::<f64>(path).map_err(|e| e.to_string())?,
            None => ScenarioConfig::default(),
        };
        for kv in &self.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            apply_override(&mut cfg, key.trim(), value.trim()).map_err(|e| e.to_string())?;
        }
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        if let Some(eta) = self.eta {
            cfg.eta = eta;
        }
        if let Some(c) = self.fronthaul_mbps {
            cfg.fronthaul_capacity = vec![c; cfg.num_errh];
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario end to end and print the outcome
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Scheme: alg1-c, alg1-nc or spdc
        #[arg(long, default_value = "alg1-c")]
        scheme: String,
        /// Output directory for the convergence trace
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Write the convergence trace CSV
        #[arg(long)]
        trace: bool,
    },
    /// Sweep eta / fronthaul grids with paired Monte-Carlo trials
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Sweep description file (flat key = value text)
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Trials per grid point
        #[arg(long)]
        trials: Option<usize>,
        /// Schemes to run (repeatable)
        #[arg(long = "scheme")]
        schemes: Vec<String>,
        /// Eta grid values (repeatable; overrides the spec file)
        #[arg(long = "eta-grid")]
        eta_grid: Vec<f64>,
        /// Fronthaul capacity grid, Mb/s (repeatable; overrides the spec file)
        #[arg(long = "fronthaul-grid")]
        fronthaul_grid: Vec<f64>,
        /// Output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit per-trial convergence traces for the first grid point
        #[arg(long)]
        trace: bool,
    },
    /// Run only the initializer and report the feasibility margin
    InitCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { cfg, scheme, out, trace } => {
            let cfg = cfg.build()?;
            let scheme = Scheme::from_cli_name(&scheme)
                .ok_or_else(|| format!("unknown scheme `{scheme}` (alg1-c, alg1-nc, spdc)"))?;
            let scen = build_scenario(&cfg).map_err(|e| e.to_string())?;
            for w in &scen.warnings {
                eprintln!("warning: {w}");
            }
            let settings = AlgorithmSettings::default();
            let result = run_scheme(&scen, scheme, &settings).map_err(|e| e.to_string())?;
            println!("scheme           {}", result.scheme.cli_name());
            println!("status           {}", status_text(&result.status));
            println!("sum rate         {:.4} Mb/s", result.sum_rate);
            println!("total power      {:.4} W", result.power.total);
            println!("busy power       {:.4} W", result.power.busy);
            println!("objective        {:.6}", result.objective);
            println!(
                "iterations       outer {} middle {} inner {}",
                result.outer_iters, result.middle_iters, result.inner_iters
            );
            println!("active pairs     {} of {}", result.association.active_pairs(), cfg.num_ue * cfg.num_errh);
            println!("association (UE rows, eRRH columns):");
            for row in &result.association.served {
                let line: String = row.iter().map(|&b| if b { '1' } else { '0' }).collect();
                println!("  {line}");
            }
            println!("fronthaul Mb/s   {:?}", result.fronthaul.iter().map(|f| (f * 100.0).round() / 100.0).collect::<Vec<_>>());
            let worst = result.feasibility.max_violation();
            println!("max violation    {worst:.3e}");
            if trace {
                std::fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
                let path = out.join("convergence_0.csv");
                emit_convergence(&result, &path).map_err(|e| e.to_string())?;
                println!("trace written    {}", path.display());
            }
            Ok(())
        }
        Command::Sweep { cfg, spec, trials, schemes, eta_grid, fronthaul_grid, out, trace } => {
            let single_eta = cfg.eta;
            let single_c = cfg.fronthaul_mbps;
            let cfg = cfg.build()?;
            let mut sweep: SweepSpec<f64> = match &spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| format!("{}: {e}", path.display()))?;
                    parse_sweep_spec(&text).map_err(|e| e.to_string())?
                }
                None => parse_sweep_spec("").map_err(|e| e.to_string())?,
            };
            if let Some(t) = trials {
                apply_sweep_override(&mut sweep, "trials", &t.to_string()).map_err(|e| e.to_string())?;
            }
            if !schemes.is_empty() {
                sweep.schemes = schemes
                    .iter()
                    .map(|s| {
                        Scheme::from_cli_name(s).ok_or_else(|| format!("unknown scheme `{s}`"))
                    })
                    .collect::<Result<_, _>>()?;
            }
            if !eta_grid.is_empty() {
                sweep.etas = eta_grid;
            } else if let Some(eta) = single_eta {
                sweep.etas = vec![eta];
            }
            if !fronthaul_grid.is_empty() {
                sweep.fronthaul_mbps = fronthaul_grid;
            } else if let Some(c) = single_c {
                sweep.fronthaul_mbps = vec![c];
            }
            if let Some(dir) = out {
                sweep.out_dir = dir;
            }
            if trace {
                sweep.trace = true;
            }
            sweep.seed_base = cfg.rng_seed;
            let settings = AlgorithmSettings::default();
            let outcome = run_sweep(&sweep, &cfg, &settings).map_err(|e| e.to_string())?;
            println!("{}", fogran_core::harness::AGGREGATE_HEADER);
            for row in &outcome.aggregates {
                println!(
                    "{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.2},{:.2},{:.2},{:.2}",
                    row.scheme.cli_name(),
                    row.eta,
                    row.fronthaul_mbps,
                    row.trials_ok,
                    row.failures,
                    row.sum_rate_mean,
                    row.sum_rate_std,
                    row.p_busy_mean,
                    row.p_busy_std,
                    row.objective_mean,
                    row.objective_std,
                    row.outer_iters_mean,
                    row.middle_iters_mean,
                    row.inner_iters_mean,
                    row.active_pairs_mean
                );
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::InitCheck { cfg } => {
            let cfg = cfg.build()?;
            let scen = build_scenario(&cfg).map_err(|e| e.to_string())?;
            let settings = AlgorithmSettings::default();
            let init = algorithm2_init(&scen, &settings).map_err(|e| e.to_string())?;
            println!("feasible starting point found");
            println!("min rate ratio   {:.4}", init.min_ratio);
            println!("sum rate         {:.4} Mb/s", init.rates.sum());
            let report = fogran_core::model::check_feasibility(&init.stack, &init.rates, &scen, 1e-6);
            println!("max violation    {:.3e}", report.max_violation());
            Ok(())
        }
    }
}

fn status_text(status: &RunStatus) -> String {
    match status {
        RunStatus::Converged => "converged".into(),
        RunStatus::IterationLimit => "iteration limit".into(),
        RunStatus::SolverStalled(msg) => format!("solver stalled: {msg}"),
    }
}
