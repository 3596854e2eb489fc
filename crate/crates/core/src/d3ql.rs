//! Dueling double Q-learning: epsilon-greedy acting on the online network,
//! a FIFO replay buffer sampled uniformly with replacement, targets built by
//! letting the online network pick the next action and the target network
//! value it, mini-batch SGD on the squared TD error, and a periodic hard
//! copy of the online network into the target network.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, UavEnv};
use crate::net::{
    featurize, loss_and_gradient, sgd_step, NetArchitecture, NetError, NetParams, TdSample,
};
use crate::schedule::EpsilonSchedule;
use crate::seeds;
use crate::tabular::{select_epsilon_greedy, TabularError};
use crate::util::argmax;

#[derive(Debug, Error)]
pub enum D3qlError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("requested {requested} samples from a buffer holding {available}")]
    InsufficientData { requested: usize, available: usize },
    #[error("mini-batch size must be at least 1")]
    ZeroBatch,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

impl From<TabularError> for D3qlError {
    fn from(err: TabularError) -> Self {
        match err {
            TabularError::Env(e) => D3qlError::Env(e),
            other => D3qlError::BadConfig(other.to_string()),
        }
    }
}

/// One stored experience.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: [f64; 3],
    pub action: usize,
    pub reward: f64,
    pub next_state: [f64; 3],
}

/// Fixed-capacity ring of transitions; once full, each push evicts the
/// oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    write_pos: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "replay buffer capacity must be at least 1");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            write_pos: 0,
        }
    }

    pub fn push(&mut self, transition: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.write_pos] = transition;
        }
        self.write_pos = (self.write_pos + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Draws `k` transitions uniformly with replacement. A non-empty buffer
    /// supports any `k ≥ 1`; sampling an empty buffer is an error.
    pub fn sample(&self, k: usize, rng: &mut impl Rng) -> Result<Vec<Transition>, D3qlError> {
        if k == 0 {
            return Err(D3qlError::ZeroBatch);
        }
        if self.items.is_empty() {
            return Err(D3qlError::InsufficientData {
                requested: k,
                available: 0,
            });
        }
        Ok((0..k)
            .map(|_| self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}

/// Hyperparameters for one D3QL training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct D3QLConfig {
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Leading fraction of the run over which epsilon anneals linearly.
    pub epsilon_decay_fraction: f64,
    pub batch_size: usize,
    pub target_sync_interval: u64,
    pub learning_start: usize,
    pub training_steps: u64,
    pub step_size: f64,
    pub step_size_decay: f64,
    pub buffer_capacity: usize,
    pub trunk: Vec<usize>,
}

impl Default for D3QLConfig {
    fn default() -> Self {
        Self {
            discount: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_fraction: 0.15,
            batch_size: 32,
            target_sync_interval: 1_000,
            learning_start: 1_000,
            training_steps: 50_000,
            step_size: 2e-3,
            step_size_decay: 0.99993,
            buffer_capacity: 100_000,
            trunk: vec![64, 64],
        }
    }
}

impl D3QLConfig {
    pub fn validate(&self) -> Result<(), D3qlError> {
        if !(0.0..1.0).contains(&self.discount) {
            return Err(D3qlError::BadConfig("discount must be in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(D3qlError::ZeroBatch);
        }
        if self.batch_size > self.buffer_capacity {
            return Err(D3qlError::BadConfig(
                "batch_size exceeds buffer_capacity".into(),
            ));
        }
        if self.target_sync_interval < 1 {
            return Err(D3qlError::BadConfig(
                "target_sync_interval must be at least 1".into(),
            ));
        }
        if self.learning_start < self.batch_size {
            return Err(D3qlError::BadConfig(
                "learning_start must be at least batch_size".into(),
            ));
        }
        if self.step_size <= 0.0 || self.step_size.is_nan() {
            return Err(D3qlError::BadConfig("step_size must be positive".into()));
        }
        if !(self.step_size_decay > 0.0 && self.step_size_decay <= 1.0) {
            return Err(D3qlError::BadConfig(
                "step_size_decay must be in (0, 1]".into(),
            ));
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return Err(D3qlError::BadConfig(
                "epsilon_decay_fraction must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Regression target for one transition: the online network chooses the
/// next action, the target network prices it.
pub fn double_target(
    reward: f64,
    discount: f64,
    q_online_next: &[f64],
    q_target_next: &[f64],
) -> f64 {
    let chosen = argmax(q_online_next);
    reward + discount * q_target_next[chosen]
}

/// Per-slot training log entry.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step: u64,
    pub action: usize,
    pub reward: f64,
    pub loss: Option<f64>,
    pub epsilon: f64,
    /// Energy of the state the slot started in (−1 while charging).
    pub energy: i32,
    /// Cell of the state the slot started in (−1 while charging).
    pub cell: i32,
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: NetParams,
    pub records: Vec<StepRecord>,
}

impl TrainOutput {
    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.loss).collect()
    }
}

/// Mutable training state: online and target networks, the replay buffer and
/// the RNG streams. One trainer drives one environment serially.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: D3QLConfig,
    online: NetParams,
    target: NetParams,
    buffer: ReplayBuffer,
    act_rng: ChaCha8Rng,
    batch_rng: ChaCha8Rng,
    schedule: EpsilonSchedule,
    updates: u64,
}

impl Trainer {
    pub fn new(num_actions: usize, config: D3QLConfig, seed: u64) -> Result<Self, D3qlError> {
        config.validate()?;
        let arch = NetArchitecture::new(3, config.trunk.clone(), num_actions)?;
        let online = NetParams::init(arch, seeds::derive(seed, seeds::NET_INIT))?;
        let target = online.clone();
        let schedule = EpsilonSchedule::over_training(
            config.epsilon_start,
            config.epsilon_end,
            config.training_steps,
            config.epsilon_decay_fraction,
        );
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_capacity),
            act_rng: ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::ACTION)),
            batch_rng: ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::BATCH)),
            online,
            target,
            schedule,
            updates: 0,
            config,
        })
    }

    pub fn online(&self) -> &NetParams {
        &self.online
    }

    pub fn target(&self) -> &NetParams {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Hard-copies the online network into the target network; later online
    /// updates leave the copy untouched.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// One slot of acting, storing, and (once enough experience is buffered)
    /// one mini-batch gradient step. Transitions keep flowing while the UAV
    /// charges so the value of entering the detour is learned too.
    pub fn train_step(
        &mut self,
        env: &mut UavEnv,
        step_index: u64,
    ) -> Result<StepRecord, D3qlError> {
        let state = env.state();
        let features = featurize(&state, env.config());
        let epsilon = self.schedule.value(step_index);
        let u_explore = self.act_rng.random::<f64>();
        let u_choice = self.act_rng.random::<f64>();
        let q = self.online.q_values(&features)?;
        let action = select_epsilon_greedy(&q, epsilon, u_explore, u_choice)?;

        let outcome = env.step(action)?;
        let next_features = featurize(&outcome.next_state, env.config());
        self.buffer.push(Transition {
            state: features,
            action,
            reward: outcome.reward,
            next_state: next_features,
        });

        let mut loss = None;
        if self.buffer.len() >= self.config.learning_start {
            let batch = self.buffer.sample(self.config.batch_size, &mut self.batch_rng)?;
            let mut targets = Vec::with_capacity(batch.len());
            for transition in &batch {
                let q_online_next = self.online.q_values(&transition.next_state)?;
                let q_target_next = self.target.q_values(&transition.next_state)?;
                targets.push(double_target(
                    transition.reward,
                    self.config.discount,
                    &q_online_next,
                    &q_target_next,
                ));
            }
            let samples: Vec<TdSample<'_>> = batch
                .iter()
                .zip(&targets)
                .map(|(t, &target)| TdSample {
                    input: &t.state,
                    action: t.action,
                    target,
                })
                .collect();
            let (batch_loss, grads) = loss_and_gradient(&self.online, &samples)?;
            let eta = self.config.step_size
                * self.config.step_size_decay.powi(self.updates.min(i32::MAX as u64) as i32);
            sgd_step(&mut self.online, &grads, eta)?;
            self.updates += 1;
            loss = Some(batch_loss);
        }

        if (step_index + 1).is_multiple_of(self.config.target_sync_interval) {
            self.sync_target();
        }

        Ok(StepRecord {
            step: step_index,
            action,
            reward: outcome.reward,
            loss,
            epsilon,
            energy: state.energy,
            cell: state.cell,
        })
    }

    /// Consumes the trainer, yielding the online parameters.
    pub fn into_params(self) -> NetParams {
        self.online
    }
}

/// Runs the full training loop on a freshly reset environment. Fully
/// determined by `seed`.
pub fn train(env: &mut UavEnv, config: &D3QLConfig, seed: u64) -> Result<TrainOutput, D3qlError> {
    let mut trainer = Trainer::new(env.config().num_speeds(), config.clone(), seed)?;
    env.reset(seed);
    let mut records = Vec::with_capacity(config.training_steps as usize);
    for step in 0..config.training_steps {
        records.push(trainer.train_step(env, step)?);
    }
    Ok(TrainOutput {
        params: trainer.into_params(),
        records,
    })
}
