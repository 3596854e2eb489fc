//! Tabular Q-learning: a dense action-value table over the discrete UAV
//! state space, temporal-difference updates, and epsilon-greedy control.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, UavEnv, UavState};
use crate::schedule::EpsilonSchedule;
use crate::seeds;
use crate::util::argmax;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("action-value row is empty")]
    EmptyRow,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("table file {path}: {reason}")]
    BadTableFile { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hyperparameters for a tabular training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QLConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Leading fraction of the run over which epsilon anneals linearly.
    pub epsilon_decay_fraction: f64,
    pub training_steps: u64,
}

impl Default for QLConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            discount: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_fraction: 0.15,
            training_steps: 50_000,
        }
    }
}

/// Bijection between UAV states and dense table rows.
///
/// Non-sentinel states map to `((cell − 1)·L + location)·(E + 1) + energy`;
/// the charging sentinel takes the last row, `C·L·(E + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateIndexer {
    num_cells: u32,
    positions_per_cell: u32,
    energy_levels: u32,
}

impl StateIndexer {
    pub fn new(config: &EnvConfig) -> Self {
        Self {
            num_cells: config.num_cells,
            positions_per_cell: config.positions_per_cell(),
            energy_levels: config.battery_capacity + 1,
        }
    }

    pub fn num_states(&self) -> usize {
        (self.num_cells * self.positions_per_cell * self.energy_levels) as usize + 1
    }

    pub fn sentinel_index(&self) -> usize {
        self.num_states() - 1
    }

    pub fn index(&self, state: &UavState) -> usize {
        if state.is_charging() {
            return self.sentinel_index();
        }
        let cell = state.cell as u32;
        let location = state.location as u32;
        let energy = state.energy as u32;
        (((cell - 1) * self.positions_per_cell + location) * self.energy_levels + energy) as usize
    }
}

/// Dense `(state, action)` value table, zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let base = state * self.num_actions;
        &self.values[base..base + self.num_actions]
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action with lowest-index tie-breaking.
    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(self.row(state))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Writes `(state_index, action_index, value)` rows as CSV.
    pub fn save_csv(&self, path: &Path) -> Result<(), TabularError> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "state_index,action_index,value")?;
        for state in 0..self.num_states {
            for action in 0..self.num_actions {
                writeln!(out, "{state},{action},{}", self.get(state, action))?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self, TabularError> {
        let bad = |reason: &str| TabularError::BadTableFile {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        let reader = BufReader::new(File::open(path)?);
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        let mut max_state = 0usize;
        let mut max_action = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                continue; // header
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let state: usize = parts
                .next()
                .and_then(|t| t.trim().parse().ok())
                .ok_or_else(|| bad("unparsable state index"))?;
            let action: usize = parts
                .next()
                .and_then(|t| t.trim().parse().ok())
                .ok_or_else(|| bad("unparsable action index"))?;
            let value: f64 = parts
                .next()
                .and_then(|t| t.trim().parse().ok())
                .ok_or_else(|| bad("unparsable value"))?;
            max_state = max_state.max(state);
            max_action = max_action.max(action);
            entries.push((state, action, value));
        }
        if entries.is_empty() {
            return Err(bad("no entries"));
        }
        let mut table = QTable::new(max_state + 1, max_action + 1);
        for (state, action, value) in entries {
            table.set(state, action, value);
        }
        Ok(table)
    }
}

/// One temporal-difference update toward `r + γ·max_a' Q(s', a')`.
pub fn q_update(q: f64, reward: f64, max_next_q: f64, beta: f64, gamma: f64) -> f64 {
    q + beta * (reward + gamma * max_next_q - q)
}

/// Picks a uniform action when `u_explore < epsilon`, else the greedy one
/// (ties to the lowest index). Both uniforms come from the caller so the
/// draw is reproducible and testable.
pub fn select_epsilon_greedy(
    q_row: &[f64],
    epsilon: f64,
    u_explore: f64,
    u_choice: f64,
) -> Result<usize, TabularError> {
    if q_row.is_empty() {
        return Err(TabularError::EmptyRow);
    }
    if u_explore < epsilon {
        let pick = (u_choice * q_row.len() as f64) as usize;
        Ok(pick.min(q_row.len() - 1))
    } else {
        Ok(argmax(q_row))
    }
}

/// Result of a tabular training run.
#[derive(Debug, Clone)]
pub struct TabularRun {
    pub table: QTable,
    pub rewards: Vec<f64>,
}

/// Runs `training_steps` slots of act-observe-update on the live
/// environment (a continuing task: the only interruptions are charging
/// detours). Fully determined by `seed`.
///
/// While charging the agent submits the lowest speed level, which the
/// environment ignores; the sentinel row is still updated by bootstrapping
/// through it like any other state.
pub fn train(env: &mut UavEnv, config: &QLConfig, seed: u64) -> Result<TabularRun, TabularError> {
    let indexer = StateIndexer::new(env.config());
    let num_actions = env.config().num_speeds();
    let mut table = QTable::new(indexer.num_states(), num_actions);
    let mut rewards = Vec::with_capacity(config.training_steps as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::ACTION));
    let schedule = EpsilonSchedule::over_training(
        config.epsilon_start,
        config.epsilon_end,
        config.training_steps,
        config.epsilon_decay_fraction,
    );

    let mut state = env.reset(seed);
    let mut state_idx = indexer.index(&state);
    for step in 0..config.training_steps {
        let action = if state.is_charging() {
            0
        } else {
            let epsilon = schedule.value(step);
            let u_explore = rng.random::<f64>();
            let u_choice = rng.random::<f64>();
            select_epsilon_greedy(table.row(state_idx), epsilon, u_explore, u_choice)?
        };
        let outcome = env.step(action)?;
        let next_idx = indexer.index(&outcome.next_state);
        let updated = q_update(
            table.get(state_idx, action),
            outcome.reward,
            table.max_value(next_idx),
            config.learning_rate,
            config.discount,
        );
        table.set(state_idx, action, updated);
        rewards.push(outcome.reward);
        state = outcome.next_state;
        state_idx = next_idx;
    }
    Ok(TabularRun { table, rewards })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_matches_hand_computed_values() {
        assert_eq!(q_update(0.0, 10.0, 0.0, 0.1, 0.9), 1.0);
        assert!((q_update(5.0, 0.0, 5.0, 0.1, 0.9) - 4.95).abs() < 1e-12);
        assert_eq!(q_update(3.25, 100.0, -4.0, 0.0, 0.9), 3.25);
    }

    #[test]
    fn zero_discount_fixed_point_is_the_reward() {
        let mut q = 0.0;
        for _ in 0..1000 {
            q = q_update(q, 7.5, 123.0, 0.1, 0.0);
        }
        assert!((q - 7.5).abs() < 1e-6);
    }

    #[test]
    fn epsilon_greedy_selection() {
        let row = [1.0, 3.0, 2.0];
        assert_eq!(select_epsilon_greedy(&row, 0.0, 0.99, 0.0).unwrap(), 1);
        assert_eq!(select_epsilon_greedy(&row, 1.0, 0.0, 0.5).unwrap(), 1);
        assert_eq!(select_epsilon_greedy(&[2.0, 2.0, 0.0], 0.0, 0.9, 0.0).unwrap(), 0);
        assert!(matches!(
            select_epsilon_greedy(&[], 0.5, 0.1, 0.1),
            Err(TabularError::EmptyRow)
        ));
    }

    #[test]
    fn greedy_choice_invariant_under_constant_shift() {
        let row = [0.4, -1.0, 2.2, 2.2];
        let shifted: Vec<f64> = row.iter().map(|v| v + 17.5).collect();
        assert_eq!(
            select_epsilon_greedy(&row, 0.0, 0.5, 0.0).unwrap(),
            select_epsilon_greedy(&shifted, 0.0, 0.5, 0.0).unwrap()
        );
    }

    #[test]
    fn indexer_is_a_bijection() {
        let config = EnvConfig::default();
        let indexer = StateIndexer::new(&config);
        assert_eq!(indexer.num_states(), 4 * 12 * 121 + 1);

        let mut seen = vec![false; indexer.num_states()];
        for cell in 1..=4u32 {
            for location in 0..12u32 {
                for energy in 0..=120u32 {
                    let idx = indexer.index(&UavState::working(cell, location, energy));
                    assert!(!seen[idx], "collision at index {idx}");
                    seen[idx] = true;
                }
            }
        }
        let sentinel = indexer.index(&UavState::CHARGING);
        assert_eq!(sentinel, indexer.sentinel_index());
        assert!(!seen[sentinel]);
        seen[sentinel] = true;
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn zero_steps_leaves_the_table_empty() {
        let mut env = UavEnv::new(EnvConfig::default()).unwrap();
        let config = QLConfig {
            training_steps: 0,
            ..QLConfig::default()
        };
        let run = train(&mut env, &config, 3).unwrap();
        assert!(run.table.values().iter().all(|&v| v == 0.0));
        assert!(run.rewards.is_empty());
    }

    #[test]
    fn single_step_touches_exactly_one_entry() {
        let mut env = UavEnv::new(EnvConfig::default()).unwrap();
        let config = QLConfig {
            training_steps: 1,
            ..QLConfig::default()
        };
        let run = train(&mut env, &config, 3).unwrap();
        let nonzero: Vec<(usize, f64)> = run
            .table
            .values()
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .collect();
        assert_eq!(nonzero.len(), 1);
        assert!((nonzero[0].1 - 0.1 * run.rewards[0]).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let mut env = UavEnv::new(EnvConfig::default()).unwrap();
        let config = QLConfig {
            training_steps: 2000,
            ..QLConfig::default()
        };
        let a = train(&mut env, &config, 9).unwrap();
        let b = train(&mut env, &config, 9).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.rewards, b.rewards);
        assert!(a.table.values().iter().all(|v| v.is_finite()));
        let c = train(&mut env, &config, 10).unwrap();
        assert_ne!(a.rewards, c.rewards);
    }

    #[test]
    fn table_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        let mut table = QTable::new(5, 3);
        table.set(0, 1, 1.5);
        table.set(4, 2, -0.25);
        table.set(2, 0, 1e-9);
        table.save_csv(&path).unwrap();
        let loaded = QTable::load_csv(&path).unwrap();
        assert_eq!(loaded, table);
    }
}
