use std::collections::VecDeque;

use crate::tensor::Matrix;

/// Fixed-length window of the most recent `(features, action one-hot,
/// reward)` records, oldest first. Starts zero-filled.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextWindow {
    feature_len: usize,
    num_actions: usize,
    records: VecDeque<Vec<f64>>,
}

impl ContextWindow {
    pub fn new(width: usize, feature_len: usize, num_actions: usize) -> Self {
        assert!(width > 0, "context window width must be positive");
        let record_len = feature_len + num_actions + 1;
        Self {
            feature_len,
            num_actions,
            records: std::iter::repeat(vec![0.0; record_len]).take(width).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.records.len()
    }

    pub fn record_len(&self) -> usize {
        self.feature_len + self.num_actions + 1
    }

    pub fn clear(&mut self) {
        for r in &mut self.records {
            r.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn push(&mut self, features: &[f64], action: usize, reward: f64) {
        assert_eq!(features.len(), self.feature_len, "feature length mismatch");
        let mut record = Vec::with_capacity(self.record_len());
        record.extend_from_slice(features);
        record.extend((0..self.num_actions).map(|a| if a == action { 1.0 } else { 0.0 }));
        record.push(reward);
        self.records.pop_front();
        self.records.push_back(record);
    }

    pub fn records(&self) -> impl Iterator<Item = &[f64]> {
        self.records.iter().map(Vec::as_slice)
    }

    pub fn to_matrix(&self) -> Matrix {
        let data = self.records.iter().flatten().copied().collect();
        Matrix::from_vec(self.width(), self.record_len(), data)
    }
}
