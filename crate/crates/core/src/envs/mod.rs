//! Labeled environments behind one contract: the office gridworld, the
//! seeded MiniCraft-like gridworld and the single-state pre-training MDP.
//!
//! All environments here are finite and deterministic, so besides the usual
//! reset/step interface they expose their transition function by state key.
//! Oracles (value iteration, shortest label-feasible paths) and the tabular
//! learner are built on that.

mod grid;
mod layout;
mod single;

pub use grid::{GridEnv, Move, OFFICE_LAYOUT};
pub use layout::{Cell, GridLayout};
pub use single::SingleStateEnv;

use thiserror::Error;

use crate::ltl::{Alphabet, LabelSet, LtlError};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action {action} outside 0..{num_actions}")]
    InvalidAction { action: usize, num_actions: usize },
    #[error("step called before reset")]
    NotReset,
    #[error("layout line {line}: {message}")]
    Layout { line: usize, message: String },
    #[error(transparent)]
    Ltl(#[from] LtlError),
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Snapshot of an environment state. `key` is a dense id in `0..num_states()`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub key: usize,
    pub label: LabelSet,
    pub terminal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub state: EnvState,
    /// The move was refused by a wall or the grid boundary.
    pub blocked: bool,
}

pub trait Environment {
    fn name(&self) -> &str;

    fn alphabet(&self) -> &Alphabet;

    fn num_actions(&self) -> usize;

    fn feature_len(&self) -> usize;

    /// Episode length cap used when the caller does not set one.
    fn default_step_cap(&self) -> usize;

    fn reset(&mut self, seed: u64) -> EnvState;

    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError>;

    fn features(&self, state: &EnvState) -> Vec<f64>;

    fn num_states(&self) -> usize;

    /// State with the given key under the current layout.
    fn state(&self, key: usize) -> EnvState;

    /// Deterministic successor of `key` under `action`, without moving.
    fn successor(&self, key: usize, action: usize) -> usize;

    /// Current state; `None` before the first reset.
    fn current(&self) -> Option<EnvState>;

    /// Every label some state can carry, without duplicates.
    fn label_universe(&self) -> Vec<LabelSet> {
        let mut labels: Vec<LabelSet> = (0..self.num_states()).map(|k| self.state(k).label).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    fn check_action(&self, action: usize) -> Result<(), EnvError> {
        if action < self.num_actions() {
            Ok(())
        } else {
            Err(EnvError::InvalidAction {
                action,
                num_actions: self.num_actions(),
            })
        }
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn alphabet(&self) -> &Alphabet {
        (**self).alphabet()
    }
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn feature_len(&self) -> usize {
        (**self).feature_len()
    }
    fn default_step_cap(&self) -> usize {
        (**self).default_step_cap()
    }
    fn reset(&mut self, seed: u64) -> EnvState {
        (**self).reset(seed)
    }
    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        (**self).step(action)
    }
    fn features(&self, state: &EnvState) -> Vec<f64> {
        (**self).features(state)
    }
    fn num_states(&self) -> usize {
        (**self).num_states()
    }
    fn state(&self, key: usize) -> EnvState {
        (**self).state(key)
    }
    fn successor(&self, key: usize, action: usize) -> usize {
        (**self).successor(key, action)
    }
    fn current(&self) -> Option<EnvState> {
        (**self).current()
    }
    fn label_universe(&self) -> Vec<LabelSet> {
        (**self).label_universe()
    }
}

/// Builds an environment by name: `office`, `minicraft` or `single-state`.
/// `layout` overrides the office map; `alphabet` names the single-state
/// propositions.
pub fn make_env(
    name: &str,
    layout: Option<&GridLayout>,
    alphabet: Option<&Alphabet>,
    patch: usize,
) -> Result<Box<dyn Environment + Send>, EnvError> {
    match name {
        "office" => {
            let layout = match layout {
                Some(l) => l.clone(),
                None => GridLayout::office()?,
            };
            Ok(Box::new(GridEnv::fixed("office", layout, patch)))
        }
        "minicraft" => Ok(Box::new(GridEnv::minicraft(patch)?)),
        "single-state" => {
            let alphabet = match alphabet {
                Some(a) => a.clone(),
                None => Alphabet::new(["a", "b", "c", "d"])?,
            };
            Ok(Box::new(SingleStateEnv::new(alphabet)))
        }
        other => Err(EnvError::UnknownEnvironment(other.to_string())),
    }
}
