//! Product of a labeled environment with a task closure. The formula
//! component turns the task reward Markovian: +1 when the residual task is
//! satisfied, -1 when it is falsified, 0 otherwise.

use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::envs::{EnvError, EnvState, Environment};
use crate::ltl::{satisfaction, Formula, LabelSet, TaskRef, TaskSet};

#[derive(Debug, Error)]
pub enum TlError {
    #[error("step on a terminal TL-MDP state")]
    SteppedTerminal,
    #[error("step called before reset")]
    NotReset,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TlState {
    pub env: EnvState,
    pub task: TaskRef,
}

impl TlState {
    pub fn is_terminal(&self) -> bool {
        self.task.is_terminal() || self.env.terminal
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TlTransition {
    pub state: TlState,
    pub action: usize,
    pub reward: i8,
    pub next: TlState,
    /// Episode over: task decided, environment terminal or step cap hit.
    pub done: bool,
    /// Only the step cap ended the episode; the successor still bootstraps.
    pub truncated: bool,
    pub label: LabelSet,
}

/// One member's view of a shared environment step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskTransition {
    pub task: usize,
    pub next: TaskRef,
    pub reward: i8,
    /// No bootstrap from the successor.
    pub terminal: bool,
}

pub struct TlMdp<E> {
    env: E,
    tasks: Arc<TaskSet>,
    step_cap: usize,
    steps: usize,
    state: Option<TlState>,
    done: bool,
}

impl<E: Environment> TlMdp<E> {
    pub fn new(env: E, tasks: Arc<TaskSet>) -> Self {
        let step_cap = env.default_step_cap();
        Self::with_step_cap(env, tasks, step_cap)
    }

    pub fn with_step_cap(env: E, tasks: Arc<TaskSet>, step_cap: usize) -> Self {
        Self {
            env,
            tasks,
            step_cap,
            steps: 0,
            state: None,
            done: false,
        }
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut E {
        &mut self.env
    }

    pub fn tasks(&self) -> &Arc<TaskSet> {
        &self.tasks
    }

    /// Swaps the task closure; takes effect at the next reset.
    pub fn set_tasks(&mut self, tasks: Arc<TaskSet>) {
        self.tasks = tasks;
        self.state = None;
        self.done = false;
    }

    pub fn step_cap(&self) -> usize {
        self.step_cap
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn state(&self) -> Option<TlState> {
        self.state
    }

    /// Resets the environment and progresses the root task once on the start
    /// label, so a start state that already decides the task is terminal.
    pub fn reset(&mut self, seed: u64) -> TlState {
        let env = self.env.reset(seed);
        let task = self.tasks.advance(TaskRef::Active(0), env.label);
        let state = TlState { env, task };
        self.state = Some(state);
        self.steps = 0;
        self.done = state.is_terminal();
        state
    }

    pub fn step(&mut self, action: usize) -> Result<TlTransition, TlError> {
        let state = self.state.ok_or(TlError::NotReset)?;
        if self.done {
            return Err(TlError::SteppedTerminal);
        }
        let outcome = self.env.step(action)?;
        let label = outcome.state.label;
        let next = TlState {
            env: outcome.state,
            task: self.tasks.advance(state.task, label),
        };
        self.steps += 1;
        let decided = next.is_terminal();
        let truncated = !decided && self.steps >= self.step_cap;
        self.done = decided || truncated;
        self.state = Some(next);
        Ok(TlTransition {
            state,
            action,
            reward: next.task.reward(),
            next,
            done: self.done,
            truncated,
            label,
        })
    }
}

/// Fans one environment step out to every member of the closure, as if each
/// member had been the task being pursued.
pub fn simultaneous_view(t: &TlTransition, tasks: &TaskSet) -> Vec<TaskTransition> {
    (0..tasks.len())
        .map(|i| {
            let next = tasks.step(i, t.label);
            TaskTransition {
                task: i,
                next,
                reward: next.reward(),
                terminal: next.is_terminal() || t.next.env.terminal,
            }
        })
        .collect()
}

/// History-based task reward of a state trajectory, computed from the
/// finite-trace semantics alone: +1 if the word of labels satisfies `f`, -1
/// if no continuation drawn from `universe` can still satisfy it, else 0.
///
/// Continuations are searched up to `max(1, f.eventualities())` labels,
/// enough for a task whose obligations each need one witnessing label.
pub fn nonmarkov_reward(trajectory: &[EnvState], f: &Formula, universe: &[LabelSet]) -> i8 {
    let word: Vec<LabelSet> = trajectory.iter().map(|s| s.label).collect();
    word_reward(&word, f, universe)
}

/// [`nonmarkov_reward`] on a word of labels.
pub fn word_reward(word: &[LabelSet], f: &Formula, universe: &[LabelSet]) -> i8 {
    if word.is_empty() {
        return 0;
    }
    if satisfaction(word, f)[0] {
        return 1;
    }
    let bound = f.eventualities().max(1);
    let mut extended = word.to_vec();
    for len in 1..=bound {
        // odometer over universe^len
        let mut digits = vec![0usize; len];
        loop {
            extended.truncate(word.len());
            extended.extend(digits.iter().map(|&d| universe[d]));
            if satisfaction(&extended, f)[0] {
                return 0;
            }
            let Some(pos) = digits.iter().rposition(|&d| d + 1 < universe.len()) else {
                break;
            };
            digits[pos] += 1;
            digits[pos + 1..].iter_mut().for_each(|d| *d = 0);
        }
    }
    -1
}

/// Writes an episode as tab-separated records with a header line:
/// `step action label formula reward done`. The first record (step 0) is the
/// reset state with action `-`.
pub fn write_trace<W: Write>(
    out: &mut W,
    tasks: &TaskSet,
    start: &TlState,
    transitions: &[TlTransition],
) -> io::Result<()> {
    let ab = tasks.alphabet();
    writeln!(out, "step\taction\tlabel\tformula\treward\tdone")?;
    writeln!(
        out,
        "0\t-\t{}\t{}\t{}\t{}",
        ab.format_label(start.env.label),
        tasks.describe(start.task),
        start.task.reward(),
        start.is_terminal()
    )?;
    for (k, t) in transitions.iter().enumerate() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            k + 1,
            t.action,
            ab.format_label(t.label),
            tasks.describe(t.next.task),
            t.reward,
            t.done
        )?;
    }
    Ok(())
}
