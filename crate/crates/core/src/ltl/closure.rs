use std::collections::{HashMap, VecDeque};

use super::progress::{progress, settle, Settled};
use super::simplify::simplify;
use super::syntax::{Alphabet, Formula, LabelSet};
use super::LtlError;

/// Where a task stands after consuming a label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskRef {
    Active(usize),
    Satisfied,
    Falsified,
}

impl TaskRef {
    pub fn is_terminal(self) -> bool {
        !matches!(self, TaskRef::Active(_))
    }

    pub fn active(self) -> Option<usize> {
        match self {
            TaskRef::Active(i) => Some(i),
            _ => None,
        }
    }

    /// Markovian task reward: +1 satisfied, -1 falsified, 0 otherwise.
    pub fn reward(self) -> i8 {
        match self {
            TaskRef::Active(_) => 0,
            TaskRef::Satisfied => 1,
            TaskRef::Falsified => -1,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ClosureLimits {
    pub max_members: usize,
    pub max_propositions: usize,
}

impl Default for ClosureLimits {
    fn default() -> Self {
        Self {
            max_members: 4096,
            max_propositions: 16,
        }
    }
}

/// The progression closure of a root task: every pending residual reachable
/// from the root under any sequence of labels, indexed in breadth-first
/// discovery order (root is 0). Transitions for every (member, label) pair are
/// tabulated at construction.
#[derive(Clone, Debug)]
pub struct TaskSet {
    alphabet: Alphabet,
    members: Vec<Formula>,
    keys: Vec<String>,
    index: HashMap<String, usize>,
    table: Vec<TaskRef>,
}

pub fn closure(f: &Formula, alphabet: &Alphabet) -> Result<TaskSet, LtlError> {
    closure_with(f, alphabet, ClosureLimits::default())
}

pub fn closure_with(f: &Formula, alphabet: &Alphabet, limits: ClosureLimits) -> Result<TaskSet, LtlError> {
    if alphabet.len() > limits.max_propositions {
        return Err(LtlError::AlphabetTooLarge(limits.max_propositions));
    }
    let root = simplify(f);
    if root.is_constant() {
        return Err(LtlError::TerminalRoot(root.to_string()));
    }
    let labels: Vec<LabelSet> = alphabet.all_labels().collect();
    let mut set = TaskSet {
        alphabet: alphabet.clone(),
        members: Vec::new(),
        keys: Vec::new(),
        index: HashMap::new(),
        table: Vec::new(),
    };
    set.insert(root);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let member = set.members[i].clone();
        let mut row = Vec::with_capacity(labels.len());
        for &label in &labels {
            let next = match settle(progress(label, &member)) {
                Settled::Satisfied => TaskRef::Satisfied,
                Settled::Falsified => TaskRef::Falsified,
                Settled::Pending(g) => {
                    let key = g.to_string();
                    match set.index.get(&key) {
                        Some(&j) => TaskRef::Active(j),
                        None => {
                            if set.members.len() >= limits.max_members {
                                return Err(LtlError::ClosureExplosion(limits.max_members));
                            }
                            let j = set.insert(g);
                            queue.push_back(j);
                            TaskRef::Active(j)
                        }
                    }
                }
            };
            row.push(next);
        }
        // rows are produced in member order because the queue is FIFO
        debug_assert_eq!(set.table.len(), i * labels.len());
        set.table.extend(row);
    }
    Ok(set)
}

impl TaskSet {
    fn insert(&mut self, f: Formula) -> usize {
        let key = f.to_string();
        let i = self.members.len();
        self.index.insert(key.clone(), i);
        self.keys.push(key);
        self.members.push(f);
        i
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn root(&self) -> &Formula {
        &self.members[0]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Formula] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &Formula {
        &self.members[i]
    }

    /// Canonical string of member `i`.
    pub fn key(&self, i: usize) -> &str {
        &self.keys[i]
    }

    pub fn index_of(&self, f: &Formula) -> Option<usize> {
        self.index.get(&f.to_string()).copied()
    }

    pub fn index_of_key(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Progresses member `task` on `label`.
    pub fn step(&self, task: usize, label: LabelSet) -> TaskRef {
        let width = 1usize << self.alphabet.len();
        self.table[task * width + label.bits() as usize]
    }

    /// Progresses a task reference; terminal references are absorbing.
    pub fn advance(&self, task: TaskRef, label: LabelSet) -> TaskRef {
        match task {
            TaskRef::Active(i) => self.step(i, label),
            terminal => terminal,
        }
    }

    pub fn describe(&self, task: TaskRef) -> &str {
        match task {
            TaskRef::Active(i) => self.key(i),
            TaskRef::Satisfied => "true",
            TaskRef::Falsified => "false",
        }
    }
}
