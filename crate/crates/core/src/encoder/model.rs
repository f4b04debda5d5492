use rand::Rng;

use super::EncoderError;
use crate::tensor::Matrix;

pub const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    /// Width of the pooled output.
    pub d_out: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            d_model: 32,
            d_ff: 64,
            d_out: 16,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(EncoderError::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.d_model % 2 != 0 {
            return Err(EncoderError::Config("d_model must be even".into()));
        }
        if self.d_ff == 0 || self.d_out == 0 {
            return Err(EncoderError::Config("d_ff and d_out must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

/// How input positions become `d_model` rows.
#[derive(Clone, Debug, PartialEq)]
pub enum InputLayer {
    /// Token ids looked up in a `vocab x d_model` table.
    Embedding(Matrix),
    /// Numeric records projected by `record_len x d_model` plus a bias.
    Projection { weight: Matrix, bias: Matrix },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Matrix,
    pub ln1_bias: Matrix,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln2_gain: Matrix,
    pub ln2_bias: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl LayerParams {
    fn init<R: Rng>(c: &EncoderConfig, rng: &mut R) -> Self {
        let d = c.d_model;
        let bound = 1.0 / (d as f64).sqrt();
        Self {
            ln1_gain: Matrix::filled(1, d, 1.0),
            ln1_bias: Matrix::zeros(1, d),
            wq: Matrix::uniform(d, d, bound, rng),
            wk: Matrix::uniform(d, d, bound, rng),
            wv: Matrix::uniform(d, d, bound, rng),
            wo: Matrix::uniform(d, d, bound, rng),
            ln2_gain: Matrix::filled(1, d, 1.0),
            ln2_bias: Matrix::zeros(1, d),
            w1: Matrix::uniform(d, c.d_ff, bound, rng),
            b1: Matrix::zeros(1, c.d_ff),
            w2: Matrix::uniform(c.d_ff, d, bound, rng),
            b2: Matrix::zeros(1, d),
        }
    }

    const NAMES: [&'static str; 12] = [
        "ln1.gain", "ln1.bias", "attn.wq", "attn.wk", "attn.wv", "attn.wo", "ln2.gain", "ln2.bias", "mlp.w1", "mlp.b1",
        "mlp.w2", "mlp.b2",
    ];

    fn tensors(&self) -> [&Matrix; 12] {
        [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 12] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// Weights of one transformer encoder: input layer, `L` pre-norm blocks, a
/// final layer norm and the pooling projection applied to position 0.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub input: InputLayer,
    pub layers: Vec<LayerParams>,
    pub final_gain: Matrix,
    pub final_bias: Matrix,
    pub pool: Matrix,
}

impl EncoderParams {
    /// Token encoder over a vocabulary of `vocab` ids.
    pub fn for_tokens<R: Rng>(config: EncoderConfig, vocab: usize, rng: &mut R) -> Result<Self, EncoderError> {
        config.validate()?;
        let input = InputLayer::Embedding(Matrix::normal(vocab, config.d_model, 0.02, rng));
        Ok(Self::with_input(config, input, rng))
    }

    /// Record encoder over numeric rows of width `record_len`.
    pub fn for_records<R: Rng>(config: EncoderConfig, record_len: usize, rng: &mut R) -> Result<Self, EncoderError> {
        config.validate()?;
        let bound = 1.0 / (config.d_model as f64).sqrt();
        let input = InputLayer::Projection {
            weight: Matrix::uniform(record_len, config.d_model, bound, rng),
            bias: Matrix::zeros(1, config.d_model),
        };
        Ok(Self::with_input(config, input, rng))
    }

    fn with_input<R: Rng>(config: EncoderConfig, input: InputLayer, rng: &mut R) -> Self {
        let layers = (0..config.layers).map(|_| LayerParams::init(&config, rng)).collect();
        let bound = 1.0 / (config.d_model as f64).sqrt();
        Self {
            config,
            input,
            layers,
            final_gain: Matrix::filled(1, config.d_model, 1.0),
            final_bias: Matrix::zeros(1, config.d_model),
            pool: Matrix::uniform(config.d_model, config.d_out, bound, rng),
        }
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Every tensor with a stable dotted name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        match &self.input {
            InputLayer::Embedding(e) => out.push(("embedding".to_string(), e)),
            InputLayer::Projection { weight, bias } => {
                out.push(("input.weight".to_string(), weight));
                out.push(("input.bias".to_string(), bias));
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in LayerParams::NAMES.iter().zip(layer.tensors()) {
                out.push((format!("layer{l}.{name}"), t));
            }
        }
        out.push(("final.gain".to_string(), &self.final_gain));
        out.push(("final.bias".to_string(), &self.final_bias));
        out.push(("pool".to_string(), &self.pool));
        out
    }

    /// Mutable tensors in the order of [`EncoderParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        match &mut self.input {
            InputLayer::Embedding(e) => out.push(e),
            InputLayer::Projection { weight, bias } => {
                out.push(weight);
                out.push(bias);
            }
        }
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.final_gain);
        out.push(&mut self.final_bias);
        out.push(&mut self.pool);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Encodes a token sequence; `[PAD]` (id 0) keys are masked out.
    pub fn forward_tokens(&self, ids: &[usize]) -> Result<Encoding, EncoderError> {
        let table = match &self.input {
            InputLayer::Embedding(e) => e,
            InputLayer::Projection { .. } => {
                return Err(EncoderError::ShapeMismatch("token ids given to a record encoder".into()))
            }
        };
        if ids.is_empty() {
            return Err(EncoderError::ShapeMismatch("empty token sequence".into()));
        }
        let d = self.config.d_model;
        let mut x = Matrix::zeros(ids.len(), d);
        for (t, &id) in ids.iter().enumerate() {
            if id >= table.rows {
                return Err(EncoderError::ShapeMismatch(format!("token id {id} outside vocabulary of {}", table.rows)));
            }
            x.row_mut(t).copy_from_slice(table.row(id));
        }
        let mask: Vec<bool> = ids.iter().map(|&id| id == super::PAD).collect();
        Ok(self.run(x, mask, Input::Tokens(ids.to_vec())))
    }

    /// Encodes numeric records, one row per position; nothing is masked.
    pub fn forward_records(&self, records: &Matrix) -> Result<Encoding, EncoderError> {
        let (weight, bias) = match &self.input {
            InputLayer::Projection { weight, bias } => (weight, bias),
            InputLayer::Embedding(_) => {
                return Err(EncoderError::ShapeMismatch("records given to a token encoder".into()))
            }
        };
        if records.cols != weight.rows || records.rows == 0 {
            return Err(EncoderError::ShapeMismatch(format!(
                "records {}x{} for a projection from width {}",
                records.rows, records.cols, weight.rows
            )));
        }
        let mut x = records.matmul(weight);
        x.add_row(bias);
        let mask = vec![false; records.rows];
        Ok(self.run(x, mask, Input::Records(records.clone())))
    }

    fn run(&self, mut x: Matrix, mask: Vec<bool>, input: Input) -> Encoding {
        let c = &self.config;
        let n = x.rows;
        x.add_assign(&positional_embedding(n, c.d_model));
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut attention = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer_forward(layer, c, &x, &mask);
            attention.push(cache.probs.clone());
            caches.push(cache);
            x = next;
        }
        let (y, final_ln) = layer_norm(&x, &self.final_gain, &self.final_bias);
        let pooled = Matrix::row_vector(y.row(0).to_vec()).matmul(&self.pool).data;
        Encoding {
            pooled,
            output: y.clone(),
            attention: AttentionMap { layers: attention },
            cache: Some(EncoderCache {
                input,
                layers: caches,
                final_ln,
                y,
            }),
        }
    }

    /// Accumulates into `grads` the gradient of `dot(d_pooled, pooled)` with
    /// respect to every parameter.
    pub fn backward(&self, enc: &Encoding, d_pooled: &[f64], grads: &mut EncoderParams) -> Result<(), EncoderError> {
        let cache = enc.cache.as_ref().ok_or(EncoderError::MissingCache)?;
        let c = &self.config;
        if d_pooled.len() != c.d_out {
            return Err(EncoderError::ShapeMismatch(format!(
                "upstream gradient of width {} for pooled width {}",
                d_pooled.len(),
                c.d_out
            )));
        }
        let n = cache.y.rows;
        let y0 = Matrix::row_vector(cache.y.row(0).to_vec());
        let dp = Matrix::row_vector(d_pooled.to_vec());
        y0.t_matmul_into(&dp, &mut grads.pool);
        let mut dy = Matrix::zeros(n, c.d_model);
        dy.row_mut(0).copy_from_slice(&dp.matmul_t(&self.pool).data);
        let mut dx = layer_norm_backward(&dy, &cache.final_ln, &self.final_gain, &mut grads.final_gain, &mut grads.final_bias);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            dx = layer_backward(layer, c, &cache.layers[l], dx, &mut grads.layers[l]);
        }
        match (&cache.input, &mut grads.input) {
            (Input::Tokens(ids), InputLayer::Embedding(g)) => {
                for (t, &id) in ids.iter().enumerate() {
                    for (a, b) in g.row_mut(id).iter_mut().zip(dx.row(t)) {
                        *a += b;
                    }
                }
            }
            (Input::Records(records), InputLayer::Projection { weight, bias }) => {
                records.t_matmul_into(&dx, weight);
                dx.sum_rows_into(bias);
            }
            _ => return Err(EncoderError::ShapeMismatch("gradient buffer has a different input layer".into())),
        }
        Ok(())
    }
}

/// Output of one forward pass.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub pooled: Vec<f64>,
    /// Final layer-norm output, one row per position.
    pub output: Matrix,
    pub attention: AttentionMap,
    cache: Option<EncoderCache>,
}

impl Encoding {
    /// Drops the activations kept for the backward pass.
    pub fn discard_cache(&mut self) {
        self.cache = None;
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }
}

/// Attention weights per layer and head; each matrix is queries x keys.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub layers: Vec<Vec<Matrix>>,
}

#[derive(Clone, Debug)]
enum Input {
    Tokens(Vec<usize>),
    Records(Matrix),
}

#[derive(Clone, Debug)]
struct EncoderCache {
    input: Input,
    layers: Vec<LayerCache>,
    final_ln: LnCache,
    y: Matrix,
}

#[derive(Clone, Debug)]
struct LnCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

#[derive(Clone, Debug)]
struct LayerCache {
    ln1: LnCache,
    h1: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<Matrix>,
    ctx: Matrix,
    ln2: LnCache,
    h2: Matrix,
    u: Matrix,
    g: Matrix,
}

/// Sinusoidal table: `sin(pos / 10000^(2i/D))` in even columns and the
/// matching cosine in odd columns.
pub fn positional_embedding(len: usize, d: usize) -> Matrix {
    let mut pe = Matrix::zeros(len, d);
    for pos in 0..len {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            pe.set(pos, 2 * i, angle.sin());
            pe.set(pos, 2 * i + 1, angle.cos());
        }
    }
    pe
}

/// Scaled dot-product attention. `mask[j]` removes key `j`. Returns the
/// output and the row-stochastic weight matrix.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, mask: &[bool]) -> Result<(Matrix, Matrix), EncoderError> {
    if q.cols != k.cols || k.rows != v.rows || mask.len() != k.rows {
        return Err(EncoderError::ShapeMismatch(format!(
            "attention over Q {:?}, K {:?}, V {:?}, mask {}",
            q.shape(),
            k.shape(),
            v.shape(),
            mask.len()
        )));
    }
    let probs = attention_weights(q, k, mask);
    Ok((probs.matmul(v), probs))
}

fn attention_weights(q: &Matrix, k: &Matrix, mask: &[bool]) -> Matrix {
    let scale = 1.0 / (q.cols as f64).sqrt();
    let mut s = q.matmul_t(k);
    for i in 0..s.rows {
        let row = s.row_mut(i);
        let mut max = f64::NEG_INFINITY;
        for (j, x) in row.iter_mut().enumerate() {
            if mask[j] {
                *x = f64::NEG_INFINITY;
            } else {
                *x *= scale;
                max = max.max(*x);
            }
        }
        if max == f64::NEG_INFINITY {
            // every key masked: attend to nothing
            row.iter_mut().for_each(|x| *x = 0.0);
            continue;
        }
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = if *x == f64::NEG_INFINITY { 0.0 } else { (*x - max).exp() };
            total += *x;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    s
}

fn layer_norm(x: &Matrix, gain: &Matrix, bias: &Matrix) -> (Matrix, LnCache) {
    let d = x.cols;
    let mut xhat = Matrix::zeros(x.rows, d);
    let mut out = Matrix::zeros(x.rows, d);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        for j in 0..d {
            let h = (row[j] - mean) * is;
            xhat.set(r, j, h);
            out.set(r, j, h * gain.data[j] + bias.data[j]);
        }
    }
    (out, LnCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Matrix, cache: &LnCache, gain: &Matrix, d_gain: &mut Matrix, d_bias: &mut Matrix) -> Matrix {
    let d = dy.cols;
    let mut dx = Matrix::zeros(dy.rows, d);
    let mut dxhat = vec![0.0; d];
    for r in 0..dy.rows {
        let g = dy.row(r);
        let xh = cache.xhat.row(r);
        let mut sum = 0.0;
        let mut sum_xh = 0.0;
        for j in 0..d {
            d_gain.data[j] += g[j] * xh[j];
            d_bias.data[j] += g[j];
            dxhat[j] = g[j] * gain.data[j];
            sum += dxhat[j];
            sum_xh += dxhat[j] * xh[j];
        }
        let is = cache.inv_std[r];
        for j in 0..d {
            dx.set(r, j, is * (dxhat[j] - sum / d as f64 - xh[j] * sum_xh / d as f64));
        }
    }
    dx
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

fn head_slice(m: &Matrix, h: usize, dk: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows, dk);
    for r in 0..m.rows {
        out.row_mut(r).copy_from_slice(&m.row(r)[h * dk..(h + 1) * dk]);
    }
    out
}

fn add_head_slice(dst: &mut Matrix, src: &Matrix, h: usize, dk: usize) {
    for r in 0..dst.rows {
        for (a, b) in dst.row_mut(r)[h * dk..(h + 1) * dk].iter_mut().zip(src.row(r)) {
            *a += b;
        }
    }
}

fn layer_forward(p: &LayerParams, c: &EncoderConfig, x: &Matrix, mask: &[bool]) -> (Matrix, LayerCache) {
    let dk = c.head_dim();
    let (h1, ln1) = layer_norm(x, &p.ln1_gain, &p.ln1_bias);
    let q = h1.matmul(&p.wq);
    let k = h1.matmul(&p.wk);
    let v = h1.matmul(&p.wv);
    let mut ctx = Matrix::zeros(x.rows, c.d_model);
    let mut probs = Vec::with_capacity(c.heads);
    for h in 0..c.heads {
        let (qh, kh, vh) = (head_slice(&q, h, dk), head_slice(&k, h, dk), head_slice(&v, h, dk));
        let w = attention_weights(&qh, &kh, mask);
        add_head_slice(&mut ctx, &w.matmul(&vh), h, dk);
        probs.push(w);
    }
    let mut x_mid = ctx.matmul(&p.wo);
    x_mid.add_assign(x);
    let (h2, ln2) = layer_norm(&x_mid, &p.ln2_gain, &p.ln2_bias);
    let mut u = h2.matmul(&p.w1);
    u.add_row(&p.b1);
    let g = Matrix::from_vec(u.rows, u.cols, u.data.iter().map(|&v| gelu(v)).collect());
    let mut out = g.matmul(&p.w2);
    out.add_row(&p.b2);
    out.add_assign(&x_mid);
    let cache = LayerCache {
        ln1,
        h1,
        q,
        k,
        v,
        probs,
        ctx,
        ln2,
        h2,
        u,
        g,
    };
    (out, cache)
}

fn layer_backward(p: &LayerParams, c: &EncoderConfig, cache: &LayerCache, d_out: Matrix, grads: &mut LayerParams) -> Matrix {
    let dk = c.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();

    // MLP branch; the residual passes d_out straight through to x_mid
    cache.g.t_matmul_into(&d_out, &mut grads.w2);
    d_out.sum_rows_into(&mut grads.b2);
    let mut du = d_out.matmul_t(&p.w2);
    for (d, &u) in du.data.iter_mut().zip(&cache.u.data) {
        *d *= gelu_grad(u);
    }
    cache.h2.t_matmul_into(&du, &mut grads.w1);
    du.sum_rows_into(&mut grads.b1);
    let dh2 = du.matmul_t(&p.w1);
    let mut d_mid = layer_norm_backward(&dh2, &cache.ln2, &p.ln2_gain, &mut grads.ln2_gain, &mut grads.ln2_bias);
    d_mid.add_assign(&d_out);

    // attention branch
    cache.ctx.t_matmul_into(&d_mid, &mut grads.wo);
    let d_ctx = d_mid.matmul_t(&p.wo);
    let n = d_ctx.rows;
    let mut dq = Matrix::zeros(n, c.d_model);
    let mut dkm = Matrix::zeros(n, c.d_model);
    let mut dv = Matrix::zeros(n, c.d_model);
    for h in 0..c.heads {
        let probs = &cache.probs[h];
        let (qh, kh, vh) = (head_slice(&cache.q, h, dk), head_slice(&cache.k, h, dk), head_slice(&cache.v, h, dk));
        let dch = head_slice(&d_ctx, h, dk);
        let mut dvh = Matrix::zeros(n, dk);
        probs.t_matmul_into(&dch, &mut dvh);
        let dp = dch.matmul_t(&vh);
        let mut ds = Matrix::zeros(n, n);
        for i in 0..n {
            let pr = probs.row(i);
            let dpr = dp.row(i);
            let inner: f64 = pr.iter().zip(dpr).map(|(a, b)| a * b).sum();
            for j in 0..n {
                ds.set(i, j, pr[j] * (dpr[j] - inner) * scale);
            }
        }
        let dqh = ds.matmul(&kh);
        let mut dkh = Matrix::zeros(n, dk);
        ds.t_matmul_into(&qh, &mut dkh);
        add_head_slice(&mut dq, &dqh, h, dk);
        add_head_slice(&mut dkm, &dkh, h, dk);
        add_head_slice(&mut dv, &dvh, h, dk);
    }
    cache.h1.t_matmul_into(&dq, &mut grads.wq);
    cache.h1.t_matmul_into(&dkm, &mut grads.wk);
    cache.h1.t_matmul_into(&dv, &mut grads.wv);
    let mut dh1 = dq.matmul_t(&p.wq);
    dh1.add_assign(&dkm.matmul_t(&p.wk));
    dh1.add_assign(&dv.matmul_t(&p.wv));
    let mut dx = layer_norm_backward(&dh1, &cache.ln1, &p.ln1_gain, &mut grads.ln1_gain, &mut grads.ln1_bias);
    dx.add_assign(&d_mid);
    dx
}
