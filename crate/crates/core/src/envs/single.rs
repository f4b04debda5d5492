use super::{EnvError, EnvState, Environment, StepOutcome};
use crate::ltl::{Alphabet, LabelSet};

/// The pre-training MDP: one state, one action per proposition. Taking
/// action `p` makes the next label `{p}`. The reset label is empty.
#[derive(Clone, Debug)]
pub struct SingleStateEnv {
    alphabet: Alphabet,
    label: Option<LabelSet>,
    step_cap: usize,
}

impl SingleStateEnv {
    pub fn new(alphabet: Alphabet) -> Self {
        Self {
            alphabet,
            label: None,
            step_cap: 50,
        }
    }

    pub fn with_step_cap(mut self, cap: usize) -> Self {
        self.step_cap = cap;
        self
    }
}

impl Environment for SingleStateEnv {
    fn name(&self) -> &str {
        "single-state"
    }

    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn num_actions(&self) -> usize {
        self.alphabet.len()
    }

    fn feature_len(&self) -> usize {
        0
    }

    fn default_step_cap(&self) -> usize {
        self.step_cap
    }

    fn reset(&mut self, _seed: u64) -> EnvState {
        self.label = Some(LabelSet::EMPTY);
        self.state(0)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        self.check_action(action)?;
        if self.label.is_none() {
            return Err(EnvError::NotReset);
        }
        let label = LabelSet::singleton(action);
        self.label = Some(label);
        Ok(StepOutcome {
            state: EnvState {
                key: 0,
                label,
                terminal: false,
            },
            blocked: false,
        })
    }

    fn features(&self, _state: &EnvState) -> Vec<f64> {
        Vec::new()
    }

    fn num_states(&self) -> usize {
        1
    }

    fn state(&self, _key: usize) -> EnvState {
        EnvState {
            key: 0,
            label: self.label.unwrap_or(LabelSet::EMPTY),
            terminal: false,
        }
    }

    fn successor(&self, _key: usize, _action: usize) -> usize {
        0
    }

    fn current(&self) -> Option<EnvState> {
        self.label.map(|label| EnvState {
            key: 0,
            label,
            terminal: false,
        })
    }

    fn label_universe(&self) -> Vec<LabelSet> {
        (0..self.alphabet.len()).map(LabelSet::singleton).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> SingleStateEnv {
        SingleStateEnv::new(Alphabet::new(["a", "b", "c", "d"]).unwrap())
    }

    #[test]
    fn reset_gives_empty_label() {
        let mut e = env();
        let s = e.reset(123);
        assert_eq!(s.key, 0);
        assert!(s.label.is_empty());
    }

    #[test]
    fn action_selects_label() {
        let mut e = env();
        e.reset(0);
        let out = e.step(2).unwrap();
        assert_eq!(e.alphabet().format_label(out.state.label), "{c}");
        assert_eq!(out.state.key, 0);
        assert!(e.features(&out.state).is_empty());
        assert_eq!(e.feature_len(), 0);
        assert!(matches!(e.step(4), Err(EnvError::InvalidAction { .. })));
    }
}
