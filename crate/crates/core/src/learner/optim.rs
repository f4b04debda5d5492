use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "sgd" => Some(OptimizerKind::Sgd),
            "momentum" => Some(OptimizerKind::Momentum { beta: 0.9 }),
            "adam" => Some(Self::adam()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum { .. } => "momentum",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

/// First-order optimizer over an ordered list of tensors. The slot state is
/// created on the first step and matched to tensors by position.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: Vec<&Matrix>) {
        assert_eq!(params.len(), grads.len(), "parameter and gradient lists differ");
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| Matrix::zeros(g.rows, g.cols)).collect();
            self.second = self.first.clone();
        }
        self.steps += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (w, d) in p.data.iter_mut().zip(&g.data) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Momentum { beta } => {
                for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.first) {
                    for ((w, d), m) in p.data.iter_mut().zip(&g.data).zip(&mut v.data) {
                        *m = beta * *m + d;
                        *w -= lr * *m;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.steps as i32);
                let c2 = 1.0 - beta2.powi(self.steps as i32);
                for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    for (((w, d), m), v) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
                        *m = beta1 * *m + (1.0 - beta1) * d;
                        *v = beta2 * *v + (1.0 - beta2) * d * d;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Scales gradients in place so their joint L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [&mut Matrix], max_norm: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.data.iter()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale(s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_leaves_parameters() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Momentum { beta: 0.9 }, OptimizerKind::adam()] {
            let mut p = Matrix::from_vec(1, 2, vec![0.5, -1.0]);
            let g = Matrix::from_vec(1, 2, vec![3.0, 4.0]);
            let mut opt = Optimizer::new(kind, 0.0);
            opt.step(vec![&mut p], vec![&g]);
            assert_eq!(p.data, vec![0.5, -1.0]);
        }
    }

    #[test]
    fn sgd_step() {
        let mut p = Matrix::from_vec(1, 2, vec![0.5, -1.0]);
        let g = Matrix::from_vec(1, 2, vec![1.0, -2.0]);
        Optimizer::new(OptimizerKind::Sgd, 0.1).step(vec![&mut p], vec![&g]);
        assert_eq!(p.data, vec![0.4, -0.8]);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut p = Matrix::from_vec(1, 1, vec![0.0]);
        let g = Matrix::from_vec(1, 1, vec![123.0]);
        Optimizer::new(OptimizerKind::adam(), 0.01).step(vec![&mut p], vec![&g]);
        assert!((p.data[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn clipping() {
        let mut g = Matrix::from_vec(1, 2, vec![3.0, 4.0]);
        let n = clip_global_norm(&mut [&mut g], 1.0);
        assert_eq!(n, 5.0);
        assert!((g.data[0] - 0.6).abs() < 1e-12);
    }
}
