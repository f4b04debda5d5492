use rand::Rng;

use crate::tensor::Matrix;

/// Fully connected network with ReLU hidden layers and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

/// Activations kept for the backward pass: the input and every layer output.
#[derive(Clone, Debug)]
pub struct MlpCache {
    activations: Vec<Matrix>,
}

impl Mlp {
    /// `sizes` lists the input width, the hidden widths and the output width.
    /// Weights are uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output widths");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0].max(1) as f64).sqrt();
            weights.push(Matrix::uniform(w[0], w[1], bound, rng));
            biases.push(Matrix::zeros(1, w[1]));
        }
        Self { weights, biases }
    }

    pub fn input_len(&self) -> usize {
        self.weights[0].rows
    }

    pub fn output_len(&self) -> usize {
        self.weights.last().map(|w| w.cols).unwrap_or(0)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| Matrix::zeros(w.rows, w.cols)).collect(),
            biases: self.biases.iter().map(|b| Matrix::zeros(b.rows, b.cols)).collect(),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("dense{i}.weight"), w));
            out.push((format!("dense{i}.bias"), b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, MlpCache) {
        let mut activations = vec![x.clone()];
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut h = activations.last().expect("input present").matmul(w);
            h.add_row(b);
            if i < last {
                h.data.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(h);
        }
        let out = activations.last().expect("output present").clone();
        (out, MlpCache { activations })
    }

    pub fn predict(&self, x: &Matrix) -> Matrix {
        self.forward(x).0
    }

    /// Accumulates parameter gradients of `sum(d_out * output)` into
    /// `grads` and returns the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, d_out: &Matrix, grads: &mut Mlp) -> Matrix {
        let mut d = d_out.clone();
        for i in (0..self.weights.len()).rev() {
            let input = &cache.activations[i];
            input.t_matmul_into(&d, &mut grads.weights[i]);
            d.sum_rows_into(&mut grads.biases[i]);
            let mut dx = d.matmul_t(&self.weights[i]);
            if i > 0 {
                // input of layer i is a ReLU output
                for (g, &a) in dx.data.iter_mut().zip(&input.data) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            d = dx;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::dot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[5, 7, 6, 3], &mut rng);
        let x = Matrix::uniform(4, 5, 1.0, &mut rng);
        let up = Matrix::uniform(4, 3, 1.0, &mut rng);
        let (_, cache) = net.forward(&x);
        let mut grads = net.zeros_like();
        let dx = net.backward(&cache, &up, &mut grads);
        let loss = |n: &Mlp, x: &Matrix| dot(&n.predict(x).data, &up.data);
        let eps = 1e-6;
        let analytic: Vec<Matrix> = grads.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
        let mut probe = net.clone();
        for (ti, g) in analytic.iter().enumerate() {
            for e in 0..g.len() {
                let orig = probe.tensors_mut()[ti].data[e];
                probe.tensors_mut()[ti].data[e] = orig + eps;
                let p = loss(&probe, &x);
                probe.tensors_mut()[ti].data[e] = orig - eps;
                let m = loss(&probe, &x);
                probe.tensors_mut()[ti].data[e] = orig;
                assert!(((p - m) / (2.0 * eps) - g.data[e]).abs() < 1e-6);
            }
        }
        let mut xp = x.clone();
        for e in 0..x.len() {
            xp.data[e] = x.data[e] + eps;
            let p = loss(&net, &xp);
            xp.data[e] = x.data[e] - eps;
            let m = loss(&net, &xp);
            xp.data[e] = x.data[e];
            assert!(((p - m) / (2.0 * eps) - dx.data[e]).abs() < 1e-6);
        }
    }
}
