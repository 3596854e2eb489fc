//! Simulator of an energy-constrained UAV sweeping a loop of IoT cells to
//! collect data packets, plus the speed controllers that drive it: tabular
//! Q-learning, dueling double deep Q-learning (D3QL) trained with hand-rolled
//! backpropagation, and fixed-speed baselines. The [`experiments`] module
//! implements the convergence, policy-trace and charging-time-sweep studies
//! exposed by the `uavsim` command-line tool.

pub mod config;
pub mod d3ql;
pub mod env;
pub mod eval;
pub mod experiments;
pub mod net;
pub mod policy;
pub mod schedule;
pub mod tabular;

mod seeds;
mod util;

pub use config::{AppConfig, ExperimentConfig};
pub use d3ql::{D3QLConfig, ReplayBuffer, TrainOutput, Trainer, Transition};
pub use env::{ChargingStatus, ConfigError, EnvConfig, EnvError, StepOutcome, UavEnv, UavState};
pub use eval::EvalReport;
pub use net::{NetArchitecture, NetParams};
pub use policy::{FixedSpeed, NetGreedy, Policy, TableGreedy};
pub use schedule::EpsilonSchedule;
pub use tabular::{QLConfig, QTable, StateIndexer};
