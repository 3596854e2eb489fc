//! Long-run evaluation of a frozen policy: per-slot averages of reward,
//! collected packets and spent energy, with charging slots counted in the
//! denominator so the averages estimate the time-average objective.

use thiserror::Error;

use crate::env::{EnvConfig, EnvError, UavEnv};
use crate::policy::Policy;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation horizon must be at least 1 slot")]
    ZeroHorizon,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Config(#[from] crate::env::ConfigError),
}

/// Per-slot averages over one evaluation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub avg_reward: f64,
    /// Packets per slot.
    pub avg_throughput: f64,
    /// Energy units consumed per slot.
    pub avg_energy: f64,
    /// Fraction of slots spent at the charging station.
    pub charging_fraction: f64,
    pub horizon: u64,
    pub seed: u64,
}

/// Runs the policy greedily (no learning, no exploration) for `horizon`
/// slots on a fresh environment built from `config`.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    config: &EnvConfig,
    horizon: u64,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let mut env = UavEnv::new(config.clone())?;
    evaluate_on(policy, &mut env, horizon, seed)
}

/// Same as [`evaluate_policy`] but on a caller-provided environment, which
/// may carry a fixed charging-duration override. The environment is reset
/// with `seed` first.
pub fn evaluate_on<P: Policy + ?Sized>(
    policy: &P,
    env: &mut UavEnv,
    horizon: u64,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if horizon == 0 {
        return Err(EvalError::ZeroHorizon);
    }
    let mut state = env.reset(seed);
    let mut reward_sum = 0.0;
    let mut packets = 0u64;
    let mut energy = 0u64;
    let mut charging_slots = 0u64;
    for _ in 0..horizon {
        let action = if state.is_charging() {
            charging_slots += 1;
            0
        } else {
            policy.action(&state)
        };
        let outcome = env.step(action)?;
        reward_sum += outcome.reward;
        packets += u64::from(outcome.packets);
        energy += u64::from(outcome.energy_spent);
        state = outcome.next_state;
    }
    let slots = horizon as f64;
    Ok(EvalReport {
        avg_reward: reward_sum / slots,
        avg_throughput: packets as f64 / slots,
        avg_energy: energy as f64 / slots,
        charging_fraction: charging_slots as f64 / slots,
        horizon,
        seed,
    })
}
