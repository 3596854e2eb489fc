//! Frozen control policies: fixed-speed baselines and greedy readouts of a
//! trained table or network.

use crate::env::{EnvConfig, UavState};
use crate::net::{featurize, NetError, NetParams};
use crate::tabular::{QTable, StateIndexer};

/// A state-to-speed-level mapping. Implementations must return a valid
/// speed index for every non-sentinel state; the environment ignores
/// whatever is submitted while charging.
pub trait Policy {
    fn action(&self, state: &UavState) -> usize;
}

/// Always flies at one speed level.
#[derive(Debug, Clone, Copy)]
pub struct FixedSpeed {
    pub level: usize,
}

impl FixedSpeed {
    pub fn new(level: usize) -> Self {
        Self { level }
    }
}

impl Policy for FixedSpeed {
    fn action(&self, _state: &UavState) -> usize {
        self.level
    }
}

/// Greedy over a trained value table.
#[derive(Debug, Clone)]
pub struct TableGreedy<'a> {
    table: &'a QTable,
    indexer: StateIndexer,
}

impl<'a> TableGreedy<'a> {
    pub fn new(table: &'a QTable, config: &EnvConfig) -> Self {
        Self {
            table,
            indexer: StateIndexer::new(config),
        }
    }
}

impl Policy for TableGreedy<'_> {
    fn action(&self, state: &UavState) -> usize {
        self.table.greedy_action(self.indexer.index(state))
    }
}

/// Greedy over a trained dueling network.
#[derive(Debug, Clone)]
pub struct NetGreedy<'a> {
    params: &'a NetParams,
    config: &'a EnvConfig,
}

impl<'a> NetGreedy<'a> {
    pub fn new(params: &'a NetParams, config: &'a EnvConfig) -> Result<Self, NetError> {
        if params.arch.input_dim != 3 {
            return Err(NetError::InputDimMismatch {
                expected: 3,
                got: params.arch.input_dim,
            });
        }
        if params.arch.num_actions != config.num_speeds() {
            return Err(NetError::ActionOutOfRange {
                index: params.arch.num_actions,
                num_actions: config.num_speeds(),
            });
        }
        Ok(Self { params, config })
    }
}

impl Policy for NetGreedy<'_> {
    fn action(&self, state: &UavState) -> usize {
        let features = featurize(state, self.config);
        self.params
            .greedy_action(&features)
            .expect("validated network evaluates every state")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetArchitecture;

    #[test]
    fn fixed_policy_ignores_state() {
        let policy = FixedSpeed::new(2);
        assert_eq!(policy.action(&UavState::working(1, 0, 120)), 2);
        assert_eq!(policy.action(&UavState::CHARGING), 2);
    }

    #[test]
    fn table_greedy_reads_the_indexed_row() {
        let config = EnvConfig::default();
        let indexer = StateIndexer::new(&config);
        let mut table = QTable::new(indexer.num_states(), 3);
        let state = UavState::working(2, 4, 77);
        table.set(indexer.index(&state), 1, 9.0);
        let policy = TableGreedy::new(&table, &config);
        assert_eq!(policy.action(&state), 1);
        assert_eq!(policy.action(&UavState::working(1, 0, 120)), 0);
    }

    #[test]
    fn net_greedy_validates_shapes() {
        let config = EnvConfig::default();
        let wrong = NetParams::init(NetArchitecture::new(3, vec![4], 2).unwrap(), 1).unwrap();
        assert!(NetGreedy::new(&wrong, &config).is_err());
        let right = NetParams::init(NetArchitecture::new(3, vec![4], 3).unwrap(), 1).unwrap();
        let policy = NetGreedy::new(&right, &config).unwrap();
        let action = policy.action(&UavState::working(1, 0, 120));
        assert!(action < 3);
    }
}
