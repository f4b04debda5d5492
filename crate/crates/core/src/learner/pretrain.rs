use std::collections::VecDeque;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{rolling_success, DqnAgent, EpisodeMetrics, LearnerError, NeuralTrainer, OptimizerKind, TrainConfig};
use crate::encoder::{EncoderParams, InputLayer, TokenVocab};
use crate::envs::SingleStateEnv;
use crate::ltl::{closure_with, simplify, Alphabet, ClosureLimits, Formula, LabelSet, LtlError, TaskRef, TaskSet};

/// Random formula generator for pre-training. Weights are relative; `!` is
/// only ever applied to a proposition.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub max_depth: usize,
    pub until: f64,
    pub eventually: f64,
    pub always: f64,
    pub and: f64,
    pub or: f64,
    pub not: f64,
    /// Weight of stopping at a proposition below the root.
    pub leaf: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            until: 2.0,
            eventually: 2.0,
            always: 1.0,
            and: 2.0,
            or: 1.0,
            not: 1.0,
            leaf: 3.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainConfig {
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    /// Episode budget.
    pub budget: usize,
    /// Rolling window for the success rate.
    pub window: usize,
    pub threshold: f64,
    /// Closure size above which a sampled formula is rejected.
    pub max_members: usize,
    /// Consecutive rejections tolerated before giving up on the sampler.
    pub max_rejections: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                episodes: 50_000,
                eps_decay_fraction: 0.02,
                eps_end: 0.01,
                step_cap: Some(10),
                batch_size: 32,
                learning_starts: 256,
                train_every: 4,
                target_sync: 250,
                buffer_capacity: 20_000,
                optimizer: OptimizerKind::adam(),
                ..TrainConfig::default()
            },
            sampler: SamplerConfig::default(),
            budget: 50_000,
            window: 500,
            threshold: 0.95,
            max_members: 64,
            max_rejections: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub vocab: TokenVocab,
    pub encoder: EncoderParams,
    pub agent: DqnAgent,
    pub metrics: Vec<EpisodeMetrics>,
    /// Rolling success rate after every episode.
    pub success_curve: Vec<f64>,
    /// The threshold was reached before the budget ran out.
    pub converged: bool,
    pub rejected: usize,
}

/// Draws one simplified formula over `alphabet`. The root is always an
/// operator.
pub fn sample_formula<R: Rng>(alphabet: &Alphabet, cfg: &SamplerConfig, rng: &mut R) -> Formula {
    simplify(&sample_node(alphabet, cfg, cfg.max_depth.max(1), true, rng))
}

fn sample_node<R: Rng>(alphabet: &Alphabet, cfg: &SamplerConfig, depth: usize, root: bool, rng: &mut R) -> Formula {
    let prop = |rng: &mut R| Formula::prop(alphabet.prop(rng.gen_range(0..alphabet.len())));
    if depth == 0 {
        return prop(rng);
    }
    let leaf = if root { 0.0 } else { cfg.leaf };
    let weights = [leaf, cfg.until, cfg.eventually, cfg.always, cfg.and, cfg.or, cfg.not];
    let choice = match WeightedIndex::new(weights) {
        Ok(dist) => dist.sample(rng),
        Err(_) => 0,
    };
    let sub = |rng: &mut R| sample_node(alphabet, cfg, depth - 1, false, rng);
    match choice {
        1 => {
            let a = sub(rng);
            Formula::until(a, sub(rng))
        }
        2 => Formula::eventually(sub(rng)),
        3 => Formula::always(sub(rng)),
        4 => {
            let a = sub(rng);
            Formula::and(a, sub(rng))
        }
        5 => {
            let a = sub(rng);
            Formula::or(a, sub(rng))
        }
        6 => Formula::not(prop(rng)),
        _ => prop(rng),
    }
}

/// Closure of `f` when it is a usable pre-training task: not constant, not
/// decided by the empty reset label, with a small closure, and completable
/// within `step_cap` single-proposition labels.
pub fn trainable_for_pretraining(
    f: &Formula,
    alphabet: &Alphabet,
    step_cap: usize,
    max_members: usize,
) -> Result<TaskSet, LearnerError> {
    if f.is_constant() {
        return Err(LtlError::TerminalRoot(f.to_string()).into());
    }
    let limits = ClosureLimits {
        max_members,
        ..ClosureLimits::default()
    };
    let tasks = closure_with(f, alphabet, limits)?;
    let start = match tasks.advance(TaskRef::Active(0), LabelSet::EMPTY) {
        TaskRef::Active(i) => i,
        decided => {
            return Err(LearnerError::NoTrainableTask(format!(
                "`{f}` is decided at reset ({})",
                tasks.describe(decided)
            )))
        }
    };
    let mut dist = vec![usize::MAX; tasks.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(t) = queue.pop_front() {
        if dist[t] >= step_cap {
            continue;
        }
        for p in 0..alphabet.len() {
            match tasks.step(t, LabelSet::singleton(p)) {
                TaskRef::Satisfied => return Ok(tasks),
                TaskRef::Falsified => {}
                TaskRef::Active(j) => {
                    if dist[j] == usize::MAX {
                        dist[j] = dist[t] + 1;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    Err(LearnerError::NoTrainableTask(format!(
        "`{f}` cannot be completed within {step_cap} steps"
    )))
}

/// Pre-trains with the configured random sampler.
pub fn pretrain(alphabet: &Alphabet, cfg: &PretrainConfig) -> Result<PretrainOutcome, LearnerError> {
    let sampler = cfg.sampler.clone();
    let ab = alphabet.clone();
    pretrain_with(alphabet, cfg, move |rng| sample_formula(&ab, &sampler, rng))
}

/// Trains the formula encoder on the single-state MDP, one freshly sampled
/// task per episode, until the rolling success rate reaches the threshold or
/// the budget runs out.
pub fn pretrain_with<F>(alphabet: &Alphabet, cfg: &PretrainConfig, mut sampler: F) -> Result<PretrainOutcome, LearnerError>
where
    F: FnMut(&mut ChaCha8Rng) -> Formula,
{
    let step_cap = cfg.train.step_cap.unwrap_or(10);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    rng.set_stream(3);
    let mut rejected = 0;
    let mut next_tasks = |rng: &mut ChaCha8Rng, rejected: &mut usize| -> Result<Arc<TaskSet>, LearnerError> {
        let mut streak = 0;
        loop {
            let f = sampler(rng);
            match trainable_for_pretraining(&f, alphabet, step_cap, cfg.max_members) {
                Ok(ts) => return Ok(Arc::new(ts)),
                Err(e) => {
                    *rejected += 1;
                    streak += 1;
                    if streak >= cfg.max_rejections {
                        return Err(match e {
                            LearnerError::Ltl(LtlError::TerminalRoot(s)) => LtlError::TerminalRoot(s).into(),
                            other => other,
                        });
                    }
                }
            }
        }
    };

    let env = SingleStateEnv::new(alphabet.clone()).with_step_cap(step_cap);
    let train_cfg = TrainConfig {
        episodes: cfg.budget,
        step_cap: Some(step_cap),
        ..cfg.train.clone()
    };
    let first = next_tasks(&mut rng, &mut rejected)?;
    let mut trainer = NeuralTrainer::new(env, first.clone(), &train_cfg)?;
    let mut metrics = Vec::new();
    let mut successes = VecDeque::new();
    let mut hits = 0usize;
    let mut converged = false;
    let mut tasks = Some(first);
    for episode in 0..cfg.budget {
        let ts = match tasks.take() {
            Some(ts) => ts,
            None => next_tasks(&mut rng, &mut rejected)?,
        };
        trainer.set_tasks(ts)?;
        let m = trainer.run_episode(episode)?;
        hits += usize::from(m.success());
        successes.push_back(m.success());
        if successes.len() > cfg.window {
            hits -= usize::from(successes.pop_front().unwrap_or(false));
        }
        metrics.push(m);
        if successes.len() == cfg.window && hits as f64 >= cfg.threshold * cfg.window as f64 {
            converged = true;
            break;
        }
    }
    let success_curve = rolling_success(&metrics, cfg.window);
    Ok(PretrainOutcome {
        vocab: trainer.agent.vocab.clone(),
        encoder: trainer.agent.encoder.clone(),
        agent: trainer.agent,
        metrics,
        success_curve,
        converged,
        rejected,
    })
}

/// Copies pre-trained encoder weights into `agent`, matching embedding rows
/// by token name. Every proposition of the checkpoint must exist in the
/// agent's vocabulary; propositions only the agent knows keep their
/// initialization.
pub fn load_pretrained(agent: &mut DqnAgent, vocab: &TokenVocab, params: &EncoderParams) -> Result<(), LearnerError> {
    if params.config != agent.encoder.config {
        return Err(LearnerError::CheckpointMismatch(format!(
            "encoder shape {:?} differs from {:?}",
            params.config, agent.encoder.config
        )));
    }
    if let Some(p) = vocab.propositions().iter().find(|p| agent.vocab.id(p).is_none()) {
        return Err(LearnerError::CheckpointMismatch(format!(
            "proposition `{p}` is not in the environment alphabet"
        )));
    }
    let (InputLayer::Embedding(src), InputLayer::Embedding(dst)) = (&params.input, &mut agent.encoder.input) else {
        return Err(LearnerError::CheckpointMismatch("checkpoint is not a formula encoder".into()));
    };
    if src.rows != vocab.len() {
        return Err(LearnerError::CheckpointMismatch(format!(
            "embedding has {} rows for {} tokens",
            src.rows,
            vocab.len()
        )));
    }
    for (i, token) in vocab.tokens().iter().enumerate() {
        if let Some(j) = agent.vocab.id(token) {
            dst.row_mut(j).copy_from_slice(src.row(i));
        }
    }
    let mut encoder = agent.encoder.clone();
    for (dst, (_, src)) in encoder.tensors_mut().into_iter().zip(params.named_tensors()).skip(1) {
        dst.data.copy_from_slice(&src.data);
    }
    agent.set_encoder(encoder);
    Ok(())
}
