//! Experiment drivers behind the CLI: the convergence study comparing both
//! learners, greedy policy traces, and the charging-time sweep against the
//! fixed-speed baselines. Multi-seed and sweep workloads fan out across
//! threads, one self-contained job per (configuration, seed); results are
//! merged in a deterministic order so emitted CSV files are byte-stable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use crate::config::AppConfig;
use crate::d3ql::{self, D3qlError, StepRecord, TrainOutput};
use crate::env::{EnvConfig, UavEnv};
use crate::eval::{evaluate_policy, EvalError, EvalReport};
use crate::net::NetParams;
use crate::policy::{FixedSpeed, NetGreedy, Policy, TableGreedy};
use crate::tabular::{self, TabularError, TabularRun};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    D3ql(#[from] D3qlError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Config(#[from] crate::env::ConfigError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
}

/// Runs jobs on a small thread pool (one per available core) and returns the
/// results in input order regardless of scheduling.
fn run_jobs<J, T, F>(jobs: Vec<J>, worker: F) -> Result<Vec<T>, ExperimentError>
where
    J: Send,
    T: Send,
    F: Fn(J) -> Result<T, ExperimentError> + Sync,
{
    let total = jobs.len();
    let queue: Mutex<Vec<(usize, J)>> = Mutex::new(jobs.into_iter().enumerate().rev().collect());
    let results: Mutex<Vec<Option<Result<T, ExperimentError>>>> =
        Mutex::new((0..total).map(|_| None).collect());
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(total.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().unwrap().pop();
                match job {
                    Some((index, job)) => {
                        let result = worker(job);
                        results.lock().unwrap()[index] = Some(result);
                    }
                    None => break,
                }
            });
        }
    });

    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every job ran"))
        .collect()
}

/// Trailing moving average: entry `i` averages the last `window` values up
/// to and including `values[i]` (fewer near the start).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Both learners trained on the same environment seed.
#[derive(Debug, Clone)]
pub struct TrainedPair {
    pub seed: u64,
    pub d3ql: TrainOutput,
    pub tabular: TabularRun,
}

pub fn train_both(config: &AppConfig, seed: u64) -> Result<TrainedPair, ExperimentError> {
    let mut env = UavEnv::new(config.env.clone())?;
    let d3ql = d3ql::train(&mut env, &config.d3ql, seed)?;
    let tabular = tabular::train(&mut env, &config.tabular, seed)?;
    Ok(TrainedPair { seed, d3ql, tabular })
}

#[derive(Debug)]
pub struct ConvergenceOutcome {
    pub runs: Vec<TrainedPair>,
    pub csv_path: PathBuf,
}

/// Trains D3QL and tabular Q-learning on identical environment seeds and
/// emits per-step moving-average rewards for every (algorithm, seed).
pub fn run_convergence(
    config: &AppConfig,
    out_dir: &Path,
) -> Result<ConvergenceOutcome, ExperimentError> {
    let runs = run_jobs(config.experiment.seeds.clone(), |seed| {
        train_both(config, seed)
    })?;

    let csv_path = out_dir.join("convergence.csv");
    let mut out = BufWriter::new(File::create(&csv_path)?);
    writeln!(out, "algorithm,seed,step,window_avg_reward")?;
    let window = config.experiment.window;
    let mut emit = |algorithm: &str, seed: u64, rewards: &[f64]| -> std::io::Result<()> {
        for (i, avg) in moving_average(rewards, window).iter().enumerate() {
            writeln!(out, "{algorithm},{seed},{},{avg}", i + 1)?;
        }
        Ok(())
    };
    for run in &runs {
        emit("d3ql", run.seed, &run.d3ql.rewards())?;
    }
    for run in &runs {
        emit("qlearning", run.seed, &run.tabular.rewards)?;
    }
    out.flush()?;
    Ok(ConvergenceOutcome { runs, csv_path })
}

/// One slot of a greedy rollout. `speed` is the 1-based level submitted in
/// working slots and 0 while charging; the position and energy columns show
/// the state at the start of the slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub slot: u64,
    pub cell: i32,
    pub location: i32,
    pub energy: i32,
    pub speed: usize,
    pub charging: bool,
}

pub fn trace_policy<P: Policy + ?Sized>(
    policy: &P,
    env_config: &EnvConfig,
    horizon: u64,
    seed: u64,
) -> Result<Vec<TraceRow>, ExperimentError> {
    let mut env = UavEnv::new(env_config.clone())?;
    let mut state = env.reset(seed);
    let mut rows = Vec::with_capacity(horizon as usize);
    for slot in 1..=horizon {
        let (action, speed) = if state.is_charging() {
            (0, 0)
        } else {
            let action = policy.action(&state);
            (action, action + 1)
        };
        rows.push(TraceRow {
            slot,
            cell: state.cell,
            location: state.location,
            energy: state.energy,
            speed,
            charging: state.is_charging(),
        });
        state = env.step(action)?.next_state;
    }
    Ok(rows)
}

#[derive(Debug)]
pub struct TraceOutcome {
    pub rows: Vec<TraceRow>,
    pub csv_path: PathBuf,
}

/// Greedy rollout of a trained network, logged slot by slot.
pub fn run_policy_trace(
    params: &NetParams,
    config: &AppConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<TraceOutcome, ExperimentError> {
    let policy = NetGreedy::new(params, &config.env)?;
    let rows = trace_policy(&policy, &config.env, config.experiment.trace_horizon, seed)?;
    let csv_path = out_dir.join(format!("trace_seed{seed}.csv"));
    let mut out = BufWriter::new(File::create(&csv_path)?);
    writeln!(out, "seed,slot,cell,location,energy,speed,charging")?;
    for row in &rows {
        writeln!(
            out,
            "{seed},{},{},{},{},{},{}",
            row.slot,
            row.cell,
            row.location,
            row.energy,
            row.speed,
            u8::from(row.charging)
        )?;
    }
    out.flush()?;
    Ok(TraceOutcome { rows, csv_path })
}

/// One evaluated (policy, charging time, seed) cell of the sweep grid.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub policy: String,
    pub z: f64,
    pub seed: u64,
    pub report: EvalReport,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub csv_path: PathBuf,
}

/// Trains both learners at every mean charging time in the sweep grid and
/// evaluates them, plus the fixed-speed baselines, on the same seeds.
pub fn run_charging_sweep(
    config: &AppConfig,
    out_dir: &Path,
) -> Result<SweepOutcome, ExperimentError> {
    let mut jobs = Vec::new();
    for &z in &config.experiment.sweep_z {
        for &seed in &config.experiment.seeds {
            jobs.push((z, seed));
        }
    }

    let per_job = run_jobs(jobs, |(z, seed)| {
        let mut job_config = config.clone();
        job_config.env.mean_charging_slots = z;
        let trained = train_both(&job_config, seed)?;
        let horizon = job_config.experiment.eval_horizon;
        let env_config = &job_config.env;

        let mut rows = Vec::with_capacity(3 + 2);
        let net_policy = NetGreedy::new(&trained.d3ql.params, env_config)?;
        rows.push(SweepRow {
            policy: "d3ql".to_string(),
            z,
            seed,
            report: evaluate_policy(&net_policy, env_config, horizon, seed)?,
        });
        let table_policy = TableGreedy::new(&trained.tabular.table, env_config);
        rows.push(SweepRow {
            policy: "qlearning".to_string(),
            z,
            seed,
            report: evaluate_policy(&table_policy, env_config, horizon, seed)?,
        });
        for level in 0..env_config.num_speeds() {
            let fixed = FixedSpeed::new(level);
            rows.push(SweepRow {
                policy: format!("fixed:{}", level + 1),
                z,
                seed,
                report: evaluate_policy(&fixed, env_config, horizon, seed)?,
            });
        }
        Ok(rows)
    })?;

    let mut rows: Vec<SweepRow> = per_job.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.z.partial_cmp(&b.z)
            .unwrap()
            .then_with(|| a.policy.cmp(&b.policy))
            .then_with(|| a.seed.cmp(&b.seed))
    });

    let csv_path = out_dir.join("sweep.csv");
    let mut out = BufWriter::new(File::create(&csv_path)?);
    writeln!(out, "policy,z,seed,avg_reward,avg_throughput,avg_energy")?;
    for row in &rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.policy,
            row.z,
            row.seed,
            row.report.avg_reward,
            row.report.avg_throughput,
            row.report.avg_energy
        )?;
    }
    out.flush()?;
    Ok(SweepOutcome { rows, csv_path })
}

/// Writes the per-slot training log of a D3QL run; the loss column is empty
/// before the first learning update.
pub fn write_d3ql_history(records: &[StepRecord], path: &Path) -> Result<(), ExperimentError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "step,reward,loss,epsilon,energy,cell")?;
    for record in records {
        let loss = record.loss.map(|l| l.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{loss},{},{},{}",
            record.step + 1,
            record.reward,
            record.epsilon,
            record.energy,
            record.cell
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the per-slot reward log of a tabular run.
pub fn write_tabular_history(rewards: &[f64], path: &Path) -> Result<(), ExperimentError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "step,reward")?;
    for (i, reward) in rewards.iter().enumerate() {
        writeln!(out, "{},{reward}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes one evaluation report as CSV.
pub fn write_eval_report(
    policy: &str,
    report: &EvalReport,
    path: &Path,
) -> Result<(), ExperimentError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "policy,seed,horizon,avg_reward,avg_throughput,avg_energy")?;
    writeln!(
        out,
        "{policy},{},{},{},{},{}",
        report.seed, report.horizon, report.avg_reward, report.avg_throughput, report.avg_energy
    )?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::d3ql::D3QLConfig;
    use crate::tabular::QLConfig;

    fn small_config() -> AppConfig {
        AppConfig {
            env: EnvConfig::default(),
            tabular: QLConfig {
                training_steps: 1_200,
                ..QLConfig::default()
            },
            d3ql: D3QLConfig {
                training_steps: 1_200,
                learning_start: 64,
                buffer_capacity: 2_048,
                trunk: vec![16, 16],
                ..D3QLConfig::default()
            },
            experiment: ExperimentConfig {
                seeds: vec![1, 2],
                sweep_z: vec![5.0, 10.0],
                eval_horizon: 1_500,
                trace_horizon: 250,
                window: 100,
            },
        }
    }

    #[test]
    fn moving_average_windows() {
        let values = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(moving_average(&values, 2), vec![1.0, 1.5, 2.5, 3.5]);
        assert_eq!(moving_average(&values, 10), vec![1.0, 1.5, 2.0, 2.5]);
    }

    #[test]
    fn convergence_emits_a_row_per_step_per_algorithm_per_seed() {
        let config = small_config();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_convergence(&config, dir.path()).unwrap();
        assert_eq!(outcome.runs.len(), 2);
        let text = std::fs::read_to_string(&outcome.csv_path).unwrap();
        let rows = text.lines().count() - 1;
        assert_eq!(rows, 1_200 * 2 * 2);
        assert!(text.starts_with("algorithm,seed,step,window_avg_reward\n"));

        // Early windows of both algorithms start from the same exploratory
        // regime: their first-step averages should be of comparable size.
        let d3ql_first: Vec<f64> = outcome
            .runs
            .iter()
            .map(|r| r.d3ql.rewards()[0])
            .collect();
        let tab_first: Vec<f64> = outcome.runs.iter().map(|r| r.tabular.rewards[0]).collect();
        for v in d3ql_first.iter().chain(&tab_first) {
            assert!(*v >= 13.0 && *v <= 16.6, "first-slot reward {v}");
        }
    }

    #[test]
    fn convergence_csv_is_deterministic() {
        let config = small_config();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_convergence(&config, dir_a.path()).unwrap();
        run_convergence(&config, dir_b.path()).unwrap();
        let a = std::fs::read(dir_a.path().join("convergence.csv")).unwrap();
        let b = std::fs::read(dir_b.path().join("convergence.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_accounts_energy_against_the_chosen_speed() {
        let config = small_config();
        let rows = trace_policy(&FixedSpeed::new(0), &config.env, 250, 4).unwrap();
        assert_eq!(rows.len(), 250);
        let mut charge_cycles = 0;
        for pair in rows.windows(2) {
            let (now, next) = (&pair[0], &pair[1]);
            if !now.charging && !next.charging {
                let cost = config.env.energy_cost[now.speed - 1];
                assert_eq!(next.energy, now.energy - cost as i32);
            }
            if now.charging && !next.charging {
                charge_cycles += 1;
            }
        }
        assert!(charge_cycles >= 1, "expected a full charge cycle in 250 slots");
    }

    #[test]
    fn sweep_emits_all_policies_sorted() {
        let config = small_config();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_charging_sweep(&config, dir.path()).unwrap();
        assert_eq!(outcome.rows.len(), 2 * 5 * 2); // z values × policies × seeds
        let mut sorted = outcome.rows.clone();
        sorted.sort_by(|a, b| {
            a.z.partial_cmp(&b.z)
                .unwrap()
                .then_with(|| a.policy.cmp(&b.policy))
                .then_with(|| a.seed.cmp(&b.seed))
        });
        for (a, b) in outcome.rows.iter().zip(&sorted) {
            assert_eq!((a.policy.as_str(), a.z, a.seed), (b.policy.as_str(), b.z, b.seed));
        }
        let text = std::fs::read_to_string(&outcome.csv_path).unwrap();
        assert_eq!(text.lines().count() - 1, outcome.rows.len());
    }
}
