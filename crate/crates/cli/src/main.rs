//! Command-line driver for the UAV speed-control simulator.
//!
//! Subcommands map onto the experiment drivers in `uavsim-core`: `train`,
//! `evaluate`, `convergence`, `trace`, `sweep` and `grad-check`. All output
//! files are plain CSV (plus binary network checkpoints) and are
//! byte-identical across repeated runs with the same configuration and seed.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use uavsim_core::config::AppConfig;
use uavsim_core::env::UavEnv;
use uavsim_core::eval::evaluate_policy;
use uavsim_core::experiments::{
    run_charging_sweep, run_convergence, run_policy_trace, write_d3ql_history, write_eval_report,
    write_tabular_history,
};
use uavsim_core::net::{random_check, NetArchitecture, NetParams};
use uavsim_core::policy::{FixedSpeed, NetGreedy, Policy, TableGreedy};
use uavsim_core::tabular::QTable;
use uavsim_core::{d3ql, tabular};

#[derive(Parser)]
#[command(
    name = "uavsim",
    version,
    about = "Energy-aware UAV data-collection simulator with learned speed control"
)]
struct Cli {
    /// JSON configuration with env/tabular/d3ql/experiment sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base RNG seed for single-run subcommands.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory; defaults to $UAVSIM_OUT_DIR, then the working directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent; writes a checkpoint and a per-slot history CSV.
    Train {
        #[arg(long, value_enum, default_value_t = Algo::D3ql)]
        algo: Algo,
    },
    /// Evaluate a frozen policy: fixed:<level>, d3ql:<checkpoint> or qlearning:<table.csv>.
    Evaluate {
        #[arg(long)]
        policy: String,
        /// Evaluation horizon in slots (default: the experiment section's).
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Train both agents on every configured seed; emits moving-average reward curves.
    Convergence,
    /// Roll out a trained network greedily, logging position, energy and speed per slot.
    Trace {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Trace length in slots (default: the experiment section's).
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Train and evaluate every policy across the charging-time grid.
    Sweep,
    /// Compare analytic gradients against central finite differences.
    GradCheck,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    D3ql,
    Qlearning,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<AppConfig> {
    match path {
        Some(path) => Ok(AppConfig::from_path(path)?),
        None => Ok(AppConfig::default()),
    }
}

fn out_dir(cli_out: &Option<PathBuf>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| std::env::var_os("UAVSIM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> Result<ExitCode> {
    // The configuration is loaded before any output path is touched, so a
    // bad or missing config never leaves partial files behind.
    let config = load_config(&cli.config)?;
    let seed = cli.seed;

    match cli.command {
        Command::Train { algo } => {
            let dir = out_dir(&cli.out);
            std::fs::create_dir_all(&dir)?;
            let mut env = UavEnv::new(config.env.clone())?;
            match algo {
                Algo::D3ql => {
                    let out = d3ql::train(&mut env, &config.d3ql, seed)?;
                    let checkpoint = dir.join(format!("d3ql_seed{seed}.bin"));
                    out.params.save(&checkpoint)?;
                    let history = dir.join(format!("history_d3ql_seed{seed}.csv"));
                    write_d3ql_history(&out.records, &history)?;
                    println!("wrote {} and {}", checkpoint.display(), history.display());
                }
                Algo::Qlearning => {
                    let out = tabular::train(&mut env, &config.tabular, seed)?;
                    let table = dir.join(format!("qtable_seed{seed}.csv"));
                    out.table.save_csv(&table)?;
                    let history = dir.join(format!("history_qlearning_seed{seed}.csv"));
                    write_tabular_history(&out.rewards, &history)?;
                    println!("wrote {} and {}", table.display(), history.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { policy, horizon } => {
            let dir = out_dir(&cli.out);
            let horizon = horizon.unwrap_or(config.experiment.eval_horizon);
            let spec = PolicySpec::parse(&policy, &config)?;
            let report = {
                let boxed = spec.instantiate(&config)?;
                evaluate_policy(boxed.as_ref(), &config.env, horizon, seed)?
            };
            std::fs::create_dir_all(&dir)?;
            let file = dir.join(format!("evaluate_{}_seed{seed}.csv", spec.file_tag()));
            write_eval_report(&policy, &report, &file)?;
            println!(
                "{policy}: avg_reward {} avg_throughput {} avg_energy {} over {} slots (seed {seed})",
                report.avg_reward, report.avg_throughput, report.avg_energy, report.horizon
            );
            println!("wrote {}", file.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Convergence => {
            let dir = out_dir(&cli.out);
            std::fs::create_dir_all(&dir)?;
            let outcome = run_convergence(&config, &dir)?;
            println!(
                "trained {} seeds; wrote {}",
                outcome.runs.len(),
                outcome.csv_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace { checkpoint, horizon } => {
            let dir = out_dir(&cli.out);
            let params = NetParams::load(&checkpoint)
                .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
            let mut config = config;
            if let Some(h) = horizon {
                config.experiment.trace_horizon = h;
            }
            std::fs::create_dir_all(&dir)?;
            let outcome = run_policy_trace(&params, &config, seed, &dir)?;
            println!("wrote {}", outcome.csv_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep => {
            let dir = out_dir(&cli.out);
            std::fs::create_dir_all(&dir)?;
            let outcome = run_charging_sweep(&config, &dir)?;
            println!(
                "{} rows; wrote {}",
                outcome.rows.len(),
                outcome.csv_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::GradCheck => {
            let arch = NetArchitecture::new(3, config.d3ql.trunk.clone(), config.env.num_speeds())?;
            let started = Instant::now();
            let report = random_check(&arch, 20, 4, seed)?;
            let elapsed = started.elapsed();
            println!(
                "max relative error {:.3e} (mean {:.3e}) over 20 draws, {} parameters checked, {} kink slots skipped, {:.2?}",
                report.max_rel_error,
                report.mean_rel_error,
                report.params_checked,
                report.kinks_skipped,
                elapsed
            );
            if report.max_rel_error < 1e-4 {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: gradient check failed (max relative error >= 1e-4)");
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

enum PolicySpec {
    Fixed(usize),
    D3ql(PathBuf),
    Qlearning(PathBuf),
}

impl PolicySpec {
    fn parse(text: &str, config: &AppConfig) -> Result<Self> {
        let (kind, arg) = text
            .split_once(':')
            .ok_or_else(|| anyhow!("policy must look like fixed:<level>, d3ql:<path> or qlearning:<path>"))?;
        match kind {
            "fixed" => {
                let level: usize = arg.parse().context("fixed:<level> takes a number")?;
                let num = config.env.num_speeds();
                if level < 1 || level > num {
                    bail!("fixed speed level must be in 1..={num}");
                }
                Ok(PolicySpec::Fixed(level - 1))
            }
            "d3ql" => Ok(PolicySpec::D3ql(PathBuf::from(arg))),
            "qlearning" => Ok(PolicySpec::Qlearning(PathBuf::from(arg))),
            other => bail!("unknown policy kind {other:?}"),
        }
    }

    fn file_tag(&self) -> String {
        match self {
            PolicySpec::Fixed(level) => format!("fixed_{}", level + 1),
            PolicySpec::D3ql(_) => "d3ql".to_string(),
            PolicySpec::Qlearning(_) => "qlearning".to_string(),
        }
    }

    fn instantiate(&self, config: &AppConfig) -> Result<Box<dyn Policy + '_>> {
        match self {
            PolicySpec::Fixed(level) => Ok(Box::new(FixedSpeed::new(*level))),
            PolicySpec::D3ql(path) => {
                let params = NetParams::load(path)
                    .with_context(|| format!("loading checkpoint {}", path.display()))?;
                // Shape check up front so action() cannot fail mid-rollout.
                NetGreedy::new(&params, &config.env)?;
                Ok(Box::new(OwnedNetGreedy {
                    params,
                    config: config.env.clone(),
                }))
            }
            PolicySpec::Qlearning(path) => {
                let table = QTable::load_csv(path)
                    .with_context(|| format!("loading table {}", path.display()))?;
                Ok(Box::new(OwnedTableGreedy {
                    table,
                    config: config.env.clone(),
                }))
            }
        }
    }
}

struct OwnedNetGreedy {
    params: NetParams,
    config: uavsim_core::env::EnvConfig,
}

impl Policy for OwnedNetGreedy {
    fn action(&self, state: &uavsim_core::env::UavState) -> usize {
        let features = uavsim_core::net::featurize(state, &self.config);
        self.params
            .greedy_action(&features)
            .expect("checkpoint shape checked at load")
    }
}

struct OwnedTableGreedy {
    table: QTable,
    config: uavsim_core::env::EnvConfig,
}

impl Policy for OwnedTableGreedy {
    fn action(&self, state: &uavsim_core::env::UavState) -> usize {
        TableGreedy::new(&self.table, &self.config).action(state)
    }
}
