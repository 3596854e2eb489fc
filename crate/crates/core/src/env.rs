//! UAV data-collection environment: slotted time, a cyclic sweep over IoT
//! cells, Bernoulli packet arrivals, speed-dependent battery drain, and
//! battery-swap detours of random duration.
//!
//! One slot advances the UAV by a grid distance fixed by the chosen speed
//! level. Collecting in cell `n` succeeds with probability `p_n` per slot.
//! When the battery can no longer afford the cheapest speed, the UAV leaves
//! for a charging station; while charging, the observable state is the
//! sentinel `(-1, -1, -1)` and every slot yields zero reward. Charging ends
//! with a full battery at the position where the UAV left the loop.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment parameters. The defaults describe the reference scenario:
/// four 60 m cells on a 5 m grid, speed levels 5/10/15 m/s costing 2/3/4
/// energy units per slot, a 120-unit battery and a mean charging time of
/// 10 slots.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub num_cells: u32,
    pub cell_length_m: u32,
    pub position_step_m: u32,
    pub speeds_mps: Vec<u32>,
    pub energy_cost: Vec<u32>,
    pub arrival_probs: Vec<f64>,
    pub battery_capacity: u32,
    pub mean_charging_slots: f64,
    pub reward_base: f64,
    pub weight_data: f64,
    pub weight_energy: f64,
    pub slot_seconds: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_cells: 4,
            cell_length_m: 60,
            position_step_m: 5,
            speeds_mps: vec![5, 10, 15],
            energy_cost: vec![2, 3, 4],
            arrival_probs: vec![0.1, 0.25, 0.6, 0.15],
            battery_capacity: 120,
            mean_charging_slots: 10.0,
            reward_base: 15.0,
            weight_data: 1.0,
            weight_energy: 0.5,
            slot_seconds: 1,
        }
    }
}

/// Violation of an [`EnvConfig`] invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("num_cells must be at least 1")]
    NoCells,
    #[error("position_step_m must be at least 1")]
    ZeroPositionStep,
    #[error("slot_seconds must be at least 1")]
    ZeroSlotSeconds,
    #[error("speeds_mps must be non-empty")]
    NoSpeeds,
    #[error("speeds_mps and energy_cost must have the same length")]
    SpeedCostLengthMismatch,
    #[error("speeds_mps must be strictly increasing")]
    SpeedsNotIncreasing,
    #[error("energy_cost must be strictly increasing")]
    CostsNotIncreasing,
    #[error("cell_length_m ({cell_length_m}) must be a positive multiple of position_step_m ({position_step_m})")]
    CellLengthNotOnGrid {
        cell_length_m: u32,
        position_step_m: u32,
    },
    #[error("speed level {level} covers {meters} m per slot, which is not a multiple of position_step_m ({position_step_m})")]
    SpeedNotOnGrid {
        level: usize,
        meters: u32,
        position_step_m: u32,
    },
    #[error("arrival_probs must have one entry per cell (expected {expected}, got {got})")]
    ArrivalProbsLength { expected: u32, got: usize },
    #[error("arrival_probs[{index}] = {value} is outside [0, 1]")]
    ArrivalProbOutOfRange { index: usize, value: f64 },
    #[error("battery_capacity ({capacity}) must be at least the largest energy cost ({max_cost})")]
    BatteryTooSmall { capacity: u32, max_cost: u32 },
    #[error("mean_charging_slots ({0}) must be at least 1")]
    MeanChargingBelowOne(f64),
}

/// Environment usage or domain error.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("environment stepped before reset")]
    NotReset,
    #[error("speed level index {index} out of range ({num_levels} levels)")]
    InvalidSpeedLevel { index: usize, num_levels: usize },
    #[error("position (cell {cell}, location {location}) out of bounds")]
    OutOfBounds { cell: i64, location: i64 },
    #[error("mean charging duration {0} is below 1 slot")]
    InvalidChargingMean(f64),
}

impl EnvConfig {
    /// Parses a standalone JSON document; unknown keys are rejected.
    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Number of position indices per cell (`L`).
    pub fn positions_per_cell(&self) -> u32 {
        self.cell_length_m / self.position_step_m
    }

    /// Number of speed levels (`A`).
    pub fn num_speeds(&self) -> usize {
        self.speeds_mps.len()
    }

    /// Cheapest per-slot energy cost over all speed levels.
    pub fn min_energy_cost(&self) -> u32 {
        self.energy_cost.iter().copied().min().unwrap_or(0)
    }

    /// Grid steps travelled in one slot at the given speed level.
    pub fn grid_steps_per_slot(&self, speed_idx: usize) -> Result<u32, EnvError> {
        let speed = *self
            .speeds_mps
            .get(speed_idx)
            .ok_or(EnvError::InvalidSpeedLevel {
                index: speed_idx,
                num_levels: self.num_speeds(),
            })?;
        Ok(speed * self.slot_seconds / self.position_step_m)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_cells < 1 {
            return Err(ConfigError::NoCells);
        }
        if self.position_step_m < 1 {
            return Err(ConfigError::ZeroPositionStep);
        }
        if self.slot_seconds < 1 {
            return Err(ConfigError::ZeroSlotSeconds);
        }
        if self.speeds_mps.is_empty() {
            return Err(ConfigError::NoSpeeds);
        }
        if self.speeds_mps.len() != self.energy_cost.len() {
            return Err(ConfigError::SpeedCostLengthMismatch);
        }
        if self.speeds_mps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::SpeedsNotIncreasing);
        }
        if self.energy_cost.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::CostsNotIncreasing);
        }
        if self.cell_length_m == 0 || !self.cell_length_m.is_multiple_of(self.position_step_m) {
            return Err(ConfigError::CellLengthNotOnGrid {
                cell_length_m: self.cell_length_m,
                position_step_m: self.position_step_m,
            });
        }
        for (level, &speed) in self.speeds_mps.iter().enumerate() {
            let meters = speed * self.slot_seconds;
            if meters == 0 || !meters.is_multiple_of(self.position_step_m) {
                return Err(ConfigError::SpeedNotOnGrid {
                    level,
                    meters,
                    position_step_m: self.position_step_m,
                });
            }
        }
        if self.arrival_probs.len() != self.num_cells as usize {
            return Err(ConfigError::ArrivalProbsLength {
                expected: self.num_cells,
                got: self.arrival_probs.len(),
            });
        }
        for (index, &value) in self.arrival_probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::ArrivalProbOutOfRange { index, value });
            }
        }
        let max_cost = self.energy_cost.iter().copied().max().unwrap_or(0);
        if self.battery_capacity < max_cost {
            return Err(ConfigError::BatteryTooSmall {
                capacity: self.battery_capacity,
                max_cost,
            });
        }
        if self.mean_charging_slots < 1.0 || self.mean_charging_slots.is_nan() {
            return Err(ConfigError::MeanChargingBelowOne(self.mean_charging_slots));
        }
        Ok(())
    }
}

/// Observable UAV state: `(cell, location, energy)`, all `-1` while the
/// battery is being swapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UavState {
    pub cell: i32,
    pub location: i32,
    pub energy: i32,
}

impl UavState {
    /// Sentinel occupied for the whole charging detour.
    pub const CHARGING: UavState = UavState {
        cell: -1,
        location: -1,
        energy: -1,
    };

    pub fn working(cell: u32, location: u32, energy: u32) -> Self {
        Self {
            cell: cell as i32,
            location: location as i32,
            energy: energy as i32,
        }
    }

    pub fn is_charging(&self) -> bool {
        self.cell < 0
    }
}

/// Progress of a battery swap. `remaining_slots` is positive exactly while
/// the observable state is the charging sentinel; `(resume_cell,
/// resume_location)` is where the UAV rejoins the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChargingStatus {
    pub remaining_slots: u32,
    pub resume_cell: u32,
    pub resume_location: u32,
}

/// Result of one simulated slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: UavState,
    pub reward: f64,
    /// Packets collected this slot (0 or 1).
    pub packets: u32,
    /// Actual battery decrement this slot (clamped at empty).
    pub energy_spent: u32,
    pub was_working: bool,
}

/// Moves a position `k` grid steps along the loop, where `k` is set by the
/// speed level. Cells are swept cyclically `1, 2, …, C, 1, …`; overshoot past
/// a cell boundary carries into the next cell.
pub fn advance(
    cell: u32,
    location: u32,
    speed_idx: usize,
    config: &EnvConfig,
) -> Result<(u32, u32), EnvError> {
    let per_cell = config.positions_per_cell();
    if cell < 1 || cell > config.num_cells || location >= per_cell {
        return Err(EnvError::OutOfBounds {
            cell: cell as i64,
            location: location as i64,
        });
    }
    let steps = config.grid_steps_per_slot(speed_idx)?;
    let total = config.num_cells * per_cell;
    let absolute = ((cell - 1) * per_cell + location + steps) % total;
    Ok((absolute / per_cell + 1, absolute % per_cell))
}

/// Bernoulli packet arrival: 1 iff `u < p`.
pub fn sample_arrival(p: f64, u: f64) -> u32 {
    u32::from(u < p)
}

/// Geometric charging duration on `{1, 2, …}` with mean exactly
/// `mean_slots`: the smallest `k ≥ 1` with `1 − (1 − 1/mean)^k > u`.
pub fn sample_charging_duration(mean_slots: f64, u: f64) -> Result<u32, EnvError> {
    if mean_slots < 1.0 || mean_slots.is_nan() {
        return Err(EnvError::InvalidChargingMean(mean_slots));
    }
    if mean_slots == 1.0 {
        return Ok(1);
    }
    let q = 1.0 / mean_slots;
    let k = ((1.0 - u).ln() / (1.0 - q).ln()).floor() as u32;
    Ok(k + 1)
}

/// Per-slot reward: base pay plus the data bonus minus the weighted energy
/// cost of the chosen speed while working, zero otherwise.
pub fn compute_reward(was_working: bool, packets: u32, speed_idx: usize, config: &EnvConfig) -> f64 {
    if !was_working {
        return 0.0;
    }
    config.reward_base + config.weight_data * f64::from(packets)
        - config.weight_energy * f64::from(config.energy_cost[speed_idx])
}

/// The simulated environment. Single-threaded: one owner calls [`UavEnv::step`]
/// serially; independent instances may run in parallel, each with its own RNG.
#[derive(Debug, Clone)]
pub struct UavEnv {
    config: EnvConfig,
    rng: ChaCha8Rng,
    state: UavState,
    charging: ChargingStatus,
    ready: bool,
    charging_override: Option<u32>,
}

impl UavEnv {
    pub fn new(config: EnvConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(0),
            state: UavState::CHARGING,
            charging: ChargingStatus {
                remaining_slots: 0,
                resume_cell: 1,
                resume_location: 0,
            },
            ready: false,
            charging_override: None,
        })
    }

    /// Re-seeds the RNG and places the UAV at the loop origin with a full
    /// battery. Identical seeds give identical trajectories under identical
    /// action sequences.
    pub fn reset(&mut self, seed: u64) -> UavState {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = UavState::working(1, 0, self.config.battery_capacity);
        self.charging = ChargingStatus {
            remaining_slots: 0,
            resume_cell: 1,
            resume_location: 0,
        };
        self.ready = true;
        self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> UavState {
        self.state
    }

    pub fn charging_status(&self) -> ChargingStatus {
        self.charging
    }

    /// Forces every charging detour to the given fixed length instead of a
    /// random draw. Used by deterministic evaluations.
    pub fn set_charging_override(&mut self, slots: Option<u32>) {
        self.charging_override = slots;
    }

    /// Simulates one slot at the given speed level. While charging the
    /// submitted action is accepted and ignored.
    pub fn step(&mut self, speed_idx: usize) -> Result<StepOutcome, EnvError> {
        if !self.ready {
            return Err(EnvError::NotReset);
        }
        if speed_idx >= self.config.num_speeds() {
            return Err(EnvError::InvalidSpeedLevel {
                index: speed_idx,
                num_levels: self.config.num_speeds(),
            });
        }

        if self.charging.remaining_slots > 0 {
            self.charging.remaining_slots -= 1;
            self.state = if self.charging.remaining_slots == 0 {
                UavState::working(
                    self.charging.resume_cell,
                    self.charging.resume_location,
                    self.config.battery_capacity,
                )
            } else {
                UavState::CHARGING
            };
            return Ok(StepOutcome {
                next_state: self.state,
                reward: 0.0,
                packets: 0,
                energy_spent: 0,
                was_working: false,
            });
        }

        let cell = self.state.cell as u32;
        let location = self.state.location as u32;
        let energy = self.state.energy as u32;

        let u = self.rng.random::<f64>();
        let packets = sample_arrival(self.config.arrival_probs[(cell - 1) as usize], u);
        let (next_cell, next_location) = advance(cell, location, speed_idx, &self.config)?;
        let cost = self.config.energy_cost[speed_idx];
        let next_energy = energy.saturating_sub(cost);
        let energy_spent = energy - next_energy;
        let reward = compute_reward(true, packets, speed_idx, &self.config);

        if next_energy < self.config.min_energy_cost() {
            // No speed level is affordable any more: detour to a station.
            let duration = match self.charging_override {
                Some(slots) => slots.max(1),
                None => {
                    let u = self.rng.random::<f64>();
                    sample_charging_duration(self.config.mean_charging_slots, u)?
                }
            };
            self.charging = ChargingStatus {
                remaining_slots: duration,
                resume_cell: next_cell,
                resume_location: next_location,
            };
            self.state = UavState::CHARGING;
        } else {
            self.state = UavState::working(next_cell, next_location, next_energy);
        }

        Ok(StepOutcome {
            next_state: self.state,
            reward,
            packets,
            energy_spent,
            was_working: true,
        })
    }
}
