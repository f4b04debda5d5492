use std::collections::HashMap;

use rand::Rng;

use super::{LearnerError, Mlp, Optimizer, ReplayEntry, TaskTokens, TrainConfig};
use crate::encoder::{ContextWindow, EncoderParams, Encoding, TokenVocab};
use crate::envs::EnvState;
use crate::ltl::Formula;
use crate::tensor::{argmax, Matrix};

/// What a Q-function sees when asked to act.
pub struct Observation<'a> {
    pub env: EnvState,
    pub features: &'a [f64],
    /// Index of the current residual in the task closure.
    pub task: usize,
    pub formula: &'a Formula,
    /// Recent (features, action, reward) history, when the learner uses one.
    pub history: Option<&'a ContextWindow>,
}

pub trait QFunction {
    fn q_values(&mut self, obs: &Observation<'_>) -> Result<Vec<f64>, LearnerError>;

    /// Width of the history window the function conditions on, if any.
    fn context_width(&self) -> Option<usize> {
        None
    }
}

/// Double-DQN learner whose Q-network reads environment features, the pooled
/// formula representation and, optionally, a context vector.
#[derive(Clone, Debug)]
pub struct DqnAgent {
    pub vocab: TokenVocab,
    pub encoder: EncoderParams,
    pub qnet: Mlp,
    /// Context encoder; frozen during TD updates.
    pub context: Option<EncoderParams>,
    target_encoder: EncoderParams,
    target_qnet: Mlp,
    feature_len: usize,
    window: usize,
    gamma: f64,
    grad_clip: Option<f64>,
    target_sync: u64,
    encoder_opt: Optimizer,
    q_opt: Optimizer,
    updates: u64,
    target_cache: HashMap<TaskTokens, Vec<f64>>,
}

/// `r` at a terminal entry, else `r + gamma * q_target[argmax q_online]`.
pub fn double_dqn_target(reward: f64, gamma: f64, next: Option<(&[f64], &[f64])>) -> f64 {
    match next {
        None => reward,
        Some((online, target)) => reward + gamma * target[argmax(online)],
    }
}

impl DqnAgent {
    pub fn new<R: Rng>(
        cfg: &TrainConfig,
        vocab: TokenVocab,
        feature_len: usize,
        num_actions: usize,
        rng: &mut R,
    ) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let encoder = EncoderParams::for_tokens(cfg.encoder, vocab.len(), rng)?;
        let context = if cfg.context {
            let record_len = feature_len + num_actions + 1;
            Some(EncoderParams::for_records(cfg.context_encoder, record_len, rng)?)
        } else {
            None
        };
        let z_len = context.as_ref().map_or(0, |c| c.config.d_out);
        let mut sizes = vec![feature_len + cfg.encoder.d_out + z_len];
        sizes.extend(&cfg.hidden);
        sizes.push(num_actions);
        let qnet = Mlp::new(&sizes, rng);
        Ok(Self {
            vocab,
            target_encoder: encoder.clone(),
            target_qnet: qnet.clone(),
            encoder,
            qnet,
            context,
            feature_len,
            window: cfg.window,
            gamma: cfg.gamma,
            grad_clip: cfg.grad_clip,
            target_sync: cfg.target_sync,
            encoder_opt: Optimizer::new(cfg.optimizer, cfg.lr),
            q_opt: Optimizer::new(cfg.optimizer, cfg.lr),
            updates: 0,
            target_cache: HashMap::new(),
        })
    }

    pub fn num_actions(&self) -> usize {
        self.qnet.output_len()
    }

    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn target_encoder(&self) -> &EncoderParams {
        &self.target_encoder
    }

    pub fn target_qnet(&self) -> &Mlp {
        &self.target_qnet
    }

    /// Copies the online weights into the target networks.
    pub fn sync_target(&mut self) {
        self.target_encoder = self.encoder.clone();
        self.target_qnet = self.qnet.clone();
        self.target_cache.clear();
    }

    /// Replaces the formula encoder, e.g. with pre-trained weights, and
    /// resynchronizes the targets.
    pub fn set_encoder(&mut self, encoder: EncoderParams) {
        self.encoder = encoder;
        self.sync_target();
    }

    pub fn tokens(&self, f: &Formula) -> Result<TaskTokens, LearnerError> {
        Ok(self.vocab.encode(f)?.into())
    }

    pub fn pooled(&self, tokens: &[usize]) -> Result<Vec<f64>, LearnerError> {
        Ok(self.encoder.forward_tokens(tokens)?.pooled)
    }

    /// Context vector of a history window, `None` without a context encoder.
    pub fn context_vector(&self, window: &ContextWindow) -> Result<Option<Vec<f64>>, LearnerError> {
        match &self.context {
            Some(c) => Ok(Some(c.forward_records(&window.to_matrix())?.pooled)),
            None => Ok(None),
        }
    }

    pub fn q_values_for(&self, features: &[f64], tokens: &[usize], z: Option<&[f64]>) -> Result<Vec<f64>, LearnerError> {
        let pooled = self.pooled(tokens)?;
        let x = self.input_row(features, &pooled, z)?;
        Ok(self.qnet.predict(&x).data)
    }

    fn input_row(&self, features: &[f64], pooled: &[f64], z: Option<&[f64]>) -> Result<Matrix, LearnerError> {
        let mut row = Vec::with_capacity(self.qnet.input_len());
        row.extend_from_slice(features);
        row.extend_from_slice(pooled);
        if let Some(z) = z {
            row.extend_from_slice(z);
        }
        if row.len() != self.qnet.input_len() {
            return Err(LearnerError::ConfigInvalid(format!(
                "Q-network expects {} inputs, got {}",
                self.qnet.input_len(),
                row.len()
            )));
        }
        Ok(Matrix::from_vec(1, row.len(), row))
    }

    fn stack(&self, rows: Vec<Matrix>) -> Matrix {
        let cols = self.qnet.input_len();
        let n = rows.len();
        let data = rows.into_iter().flat_map(|r| r.data).collect();
        Matrix::from_vec(n, cols, data)
    }

    fn target_pooled(&mut self, tokens: &TaskTokens) -> Result<Vec<f64>, LearnerError> {
        if let Some(p) = self.target_cache.get(tokens) {
            return Ok(p.clone());
        }
        let p = self.target_encoder.forward_tokens(tokens)?.pooled;
        self.target_cache.insert(tokens.clone(), p.clone());
        Ok(p)
    }

    /// TD targets of a batch under the current networks.
    pub fn td_targets(&mut self, batch: &[&ReplayEntry]) -> Result<Vec<f64>, LearnerError> {
        let mut out = Vec::with_capacity(batch.len());
        for e in batch {
            let next = match &e.next_task {
                None => None,
                Some(next) => {
                    let z = e.next_z.as_deref();
                    let online = self.q_values_for(&e.next_features, next, z)?;
                    let tp = self.target_pooled(next)?;
                    let target = self.target_qnet.predict(&self.input_row(&e.next_features, &tp, z)?).data;
                    Some((online, target))
                }
            };
            let next = next.as_ref().map(|(o, t)| (o.as_slice(), t.as_slice()));
            out.push(double_dqn_target(f64::from(e.reward), self.gamma, next));
        }
        Ok(out)
    }

    /// One double-DQN step on the mean squared TD error. Gradients reach the
    /// Q-network and, through the pooled representation, the formula
    /// encoder. Returns the loss before the step.
    pub fn td_update(&mut self, batch: &[&ReplayEntry]) -> Result<f64, LearnerError> {
        if batch.is_empty() {
            return Err(LearnerError::EmptyBatch);
        }
        let n = batch.len();

        // distinct tasks in first-seen order, each encoded once with a cache
        let mut slots: HashMap<&[usize], usize> = HashMap::new();
        let mut encodings: Vec<Encoding> = Vec::new();
        let mut task_slot = Vec::with_capacity(n);
        for e in batch {
            let slot = match slots.get(&*e.task) {
                Some(&s) => s,
                None => {
                    encodings.push(self.encoder.forward_tokens(&e.task)?);
                    slots.insert(&e.task, encodings.len() - 1);
                    encodings.len() - 1
                }
            };
            task_slot.push(slot);
        }

        let mut rows = Vec::with_capacity(n);
        for (e, &slot) in batch.iter().zip(&task_slot) {
            rows.push(self.input_row(&e.features, &encodings[slot].pooled, e.z.as_deref())?);
        }
        let x = self.stack(rows);

        let mut next_online: HashMap<&[usize], Vec<f64>> = HashMap::new();
        let mut boot_rows = Vec::new();
        let mut online_rows = Vec::new();
        let mut target_rows = Vec::new();
        for (i, e) in batch.iter().enumerate() {
            if let Some(next) = &e.next_task {
                let pooled = match next_online.get(&**next) {
                    Some(p) => p.clone(),
                    None => {
                        let p = match slots.get(&**next) {
                            Some(&s) => encodings[s].pooled.clone(),
                            None => self.pooled(next)?,
                        };
                        next_online.insert(next, p.clone());
                        p
                    }
                };
                let tp = self.target_pooled(next)?;
                let z = e.next_z.as_deref();
                online_rows.push(self.input_row(&e.next_features, &pooled, z)?);
                target_rows.push(self.input_row(&e.next_features, &tp, z)?);
                boot_rows.push(i);
            }
        }
        let mut targets: Vec<f64> = batch.iter().map(|e| f64::from(e.reward)).collect();
        if !boot_rows.is_empty() {
            let q_online = self.qnet.predict(&self.stack(online_rows));
            let q_target = self.target_qnet.predict(&self.stack(target_rows));
            for (r, &i) in boot_rows.iter().enumerate() {
                targets[i] = double_dqn_target(targets[i], self.gamma, Some((q_online.row(r), q_target.row(r))));
            }
        }

        let (q, cache) = self.qnet.forward(&x);
        let mut d_q = Matrix::zeros(n, q.cols);
        let mut loss = 0.0;
        for (i, e) in batch.iter().enumerate() {
            let td = q.get(i, e.action) - targets[i];
            loss += td * td;
            d_q.set(i, e.action, 2.0 * td / n as f64);
        }
        loss /= n as f64;

        let mut q_grads = self.qnet.zeros_like();
        let d_x = self.qnet.backward(&cache, &d_q, &mut q_grads);
        let d = self.encoder.config.d_out;
        let mut d_pooled = vec![vec![0.0; d]; encodings.len()];
        for (i, &slot) in task_slot.iter().enumerate() {
            let row = &d_x.row(i)[self.feature_len..self.feature_len + d];
            for (acc, g) in d_pooled[slot].iter_mut().zip(row) {
                *acc += g;
            }
        }
        let mut enc_grads = self.encoder.zeros_like();
        for (enc, dp) in encodings.iter().zip(&d_pooled) {
            self.encoder.backward(enc, dp, &mut enc_grads)?;
        }

        let mut enc_grad_list = enc_grads.tensors_mut();
        let mut q_grad_list = q_grads.tensors_mut();
        if let Some(max) = self.grad_clip {
            let mut all: Vec<&mut Matrix> = Vec::new();
            all.extend(enc_grad_list.iter_mut().map(|g| &mut **g));
            all.extend(q_grad_list.iter_mut().map(|g| &mut **g));
            super::clip_global_norm(&mut all, max);
        }
        let enc_grad_refs: Vec<&Matrix> = enc_grad_list.into_iter().map(|g| &*g).collect();
        let q_grad_refs: Vec<&Matrix> = q_grad_list.into_iter().map(|g| &*g).collect();
        self.encoder_opt.step(self.encoder.tensors_mut(), enc_grad_refs);
        self.q_opt.step(self.qnet.tensors_mut(), q_grad_refs);

        self.updates += 1;
        if self.updates % self.target_sync == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    /// Gradients of the mean squared TD error without applying them; used to
    /// check that the encoder receives a learning signal.
    pub fn encoder_gradient(&mut self, batch: &[&ReplayEntry]) -> Result<EncoderParams, LearnerError> {
        let mut probe = self.clone();
        probe.encoder_opt = Optimizer::new(super::OptimizerKind::Sgd, 1.0);
        probe.q_opt = Optimizer::new(super::OptimizerKind::Sgd, 0.0);
        probe.target_sync = u64::MAX;
        probe.td_update(batch)?;
        // with unit-rate SGD the parameter change is exactly minus the gradient
        let mut grads = self.encoder.zeros_like();
        for ((g, before), after) in grads
            .tensors_mut()
            .into_iter()
            .zip(self.encoder.named_tensors())
            .zip(probe.encoder.named_tensors())
        {
            for ((gv, b), a) in g.data.iter_mut().zip(&before.1.data).zip(&after.1.data) {
                *gv = b - a;
            }
        }
        Ok(grads)
    }
}

impl QFunction for DqnAgent {
    fn q_values(&mut self, obs: &Observation<'_>) -> Result<Vec<f64>, LearnerError> {
        let tokens = self.vocab.encode(obs.formula)?;
        let z = match obs.history {
            Some(w) => self.context_vector(w)?,
            None => None,
        };
        self.q_values_for(obs.features, &tokens, z.as_deref())
    }

    fn context_width(&self) -> Option<usize> {
        self.context.as_ref().map(|_| self.window)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::ltl::{parse, Alphabet, LabelSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            encoder: EncoderConfig {
                layers: 1,
                heads: 2,
                d_model: 8,
                d_ff: 16,
                d_out: 4,
            },
            context_encoder: EncoderConfig {
                layers: 1,
                heads: 1,
                d_model: 4,
                d_ff: 8,
                d_out: 3,
            },
            hidden: vec![8],
            lr: 0.05,
            ..TrainConfig::default()
        }
    }

    fn agent(cfg: &TrainConfig) -> (DqnAgent, Alphabet) {
        let ab = Alphabet::new(["a", "b"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (DqnAgent::new(cfg, TokenVocab::new(&ab), 2, 3, &mut rng).unwrap(), ab)
    }

    fn entry(a: &DqnAgent, ab: &Alphabet, task: &str, next: Option<&str>, reward: i8) -> ReplayEntry {
        ReplayEntry {
            features: Arc::from(vec![0.25, 0.5]),
            label: LabelSet::EMPTY,
            action: 1,
            task: a.tokens(&parse(task, ab).unwrap()).unwrap(),
            reward,
            next_features: Arc::from(vec![0.5, 0.5]),
            next_task: next.map(|t| a.tokens(&parse(t, ab).unwrap()).unwrap()),
            z: None,
            next_z: None,
        }
    }

    #[test]
    fn double_target_uses_online_argmax() {
        let y = double_dqn_target(0.0, 0.9, Some((&[0.0, 2.0], &[5.0, 3.0])));
        assert!((y - 2.7).abs() < 1e-12);
    }

    #[test]
    fn terminal_target_is_reward() {
        assert_eq!(double_dqn_target(1.0, 0.9, None), 1.0);
        let (mut a, ab) = agent(&small_cfg());
        let e = entry(&a, &ab, "F a", None, 1);
        assert_eq!(a.td_targets(&[&e]).unwrap(), vec![1.0]);
    }

    #[test]
    fn empty_batch_rejected() {
        let (mut a, _) = agent(&small_cfg());
        assert!(matches!(a.td_update(&[]), Err(LearnerError::EmptyBatch)));
    }

    #[test]
    fn zero_rate_keeps_parameters() {
        let cfg = TrainConfig { lr: 0.0, ..small_cfg() };
        let (mut a, ab) = agent(&cfg);
        let before = a.clone();
        let e1 = entry(&a, &ab, "F a", Some("F a"), 0);
        let e2 = entry(&a, &ab, "F (a & F b)", Some("F b"), 0);
        a.td_update(&[&e1, &e2]).unwrap();
        assert_eq!(a.encoder, before.encoder);
        assert_eq!(a.qnet, before.qnet);
    }

    #[test]
    fn encoder_receives_gradient() {
        let (mut a, ab) = agent(&small_cfg());
        let e = entry(&a, &ab, "F a", None, 1);
        let grads = a.encoder_gradient(&[&e]).unwrap();
        let max = grads.named_tensors().iter().map(|(_, m)| m.max_abs()).fold(0.0, f64::max);
        assert!(max > 0.0);
    }

    #[test]
    fn update_reduces_loss_on_fixed_batch() {
        let (mut a, ab) = agent(&small_cfg());
        let e = entry(&a, &ab, "F a", None, 1);
        let first = a.td_update(&[&e]).unwrap();
        let mut last = first;
        for _ in 0..50 {
            last = a.td_update(&[&e]).unwrap();
        }
        assert!(last < first * 0.1, "{first} -> {last}");
    }

    #[test]
    fn target_sync_period() {
        let cfg = TrainConfig {
            target_sync: 3,
            ..small_cfg()
        };
        let (mut a, ab) = agent(&cfg);
        let e = entry(&a, &ab, "F a", Some("F a"), 0);
        let init = a.target_qnet().clone();
        a.td_update(&[&e]).unwrap();
        a.td_update(&[&e]).unwrap();
        assert_eq!(a.target_qnet(), &init);
        a.td_update(&[&e]).unwrap();
        assert_eq!(a.target_qnet(), &a.qnet);
        assert_eq!(a.target_encoder(), &a.encoder);
    }

    #[test]
    fn context_branch_with_silent_weights_matches_plain_path() {
        // a context-enabled network whose z-input rows are zero computes the
        // same values and targets as the plain network with those rows removed
        let plain_cfg = small_cfg();
        let (mut plain, ab) = agent(&plain_cfg);
        let ctx_cfg = TrainConfig {
            context: true,
            ..small_cfg()
        };
        let (mut ctx, _) = agent(&ctx_cfg);
        ctx.encoder = plain.encoder.clone();
        ctx.sync_target();
        let z_len = ctx.context.as_ref().unwrap().config.d_out;
        let w0 = &plain.qnet.weights[0];
        let mut widened = Matrix::zeros(w0.rows + z_len, w0.cols);
        widened.data[..w0.data.len()].copy_from_slice(&w0.data);
        ctx.qnet = plain.qnet.clone();
        ctx.qnet.weights[0] = widened;
        ctx.sync_target();
        plain.sync_target();

        let mut e = entry(&plain, &ab, "F (a & F b)", Some("F b"), 0);
        let mut ez = e.clone();
        ez.z = Some(Arc::from(vec![0.3, -0.2, 0.9]));
        ez.next_z = Some(Arc::from(vec![-0.1, 0.4, 0.2]));
        e.reward = 0;
        assert_eq!(plain.td_targets(&[&e]).unwrap(), ctx.td_targets(&[&ez]).unwrap());
        let q_plain = plain.q_values_for(&e.features, &e.task, None).unwrap();
        let q_ctx = ctx.q_values_for(&ez.features, &ez.task, ez.z.as_deref()).unwrap();
        assert_eq!(q_plain, q_ctx);
        assert_eq!(plain.td_update(&[&e]).unwrap(), ctx.td_update(&[&ez]).unwrap());
        assert_eq!(plain.encoder, ctx.encoder);
    }
}
