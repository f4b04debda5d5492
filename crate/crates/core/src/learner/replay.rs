use std::sync::Arc;

use rand::Rng;

use crate::ltl::LabelSet;

/// A task identified by its serialized token ids.
pub type TaskTokens = Arc<[usize]>;

/// One per-task view of an environment step. Entries produced by the same
/// step share their feature and context vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayEntry {
    pub features: Arc<[f64]>,
    pub label: LabelSet,
    pub action: usize,
    pub task: TaskTokens,
    pub reward: i8,
    pub next_features: Arc<[f64]>,
    /// Successor task, `None` when the successor is terminal (no bootstrap).
    pub next_task: Option<TaskTokens>,
    pub z: Option<Arc<[f64]>>,
    pub next_z: Option<Arc<[f64]>>,
}

/// Fixed-capacity FIFO buffer with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<ReplayEntry>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, entry: ReplayEntry) {
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
        } else {
            self.entries[self.next] = entry;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn entries(&self) -> &[ReplayEntry] {
        &self.entries
    }

    /// `n` entries drawn uniformly with replacement.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<&ReplayEntry> {
        (0..n).map(|_| &self.entries[rng.gen_range(0..self.entries.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(action: usize) -> ReplayEntry {
        ReplayEntry {
            features: Arc::from(vec![]),
            label: LabelSet::EMPTY,
            action,
            task: Arc::from(vec![1usize]),
            reward: 0,
            next_features: Arc::from(vec![]),
            next_task: None,
            z: None,
            next_z: None,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        for a in 0..5 {
            b.push(entry(a));
        }
        let actions: Vec<usize> = b.entries().iter().map(|e| e.action).collect();
        assert_eq!(actions, vec![3, 4, 2]);
    }
}
