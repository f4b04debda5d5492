//! Double DQN over TL-MDP states with simultaneous sub-task updates, an
//! optional context variable, a tabular reference learner with its exact
//! oracles, and the single-state pre-training loop.

mod agent;
mod config;
mod metrics;
mod mlp;
mod optim;
mod oracle;
mod pretrain;
mod replay;
mod tabular;
mod train;

pub use agent::{double_dqn_target, DqnAgent, Observation, QFunction};
pub use config::{epsilon_at, TrainConfig};
pub use metrics::{performance, rolling_success, write_metrics_csv, EpisodeMetrics, EvalSummary, METRICS_HEADER};
pub use mlp::{Mlp, MlpCache};
pub use optim::{clip_global_norm, Optimizer, OptimizerKind};
pub use oracle::{reachable_product, shortest_steps, value_iteration, ProductValues};
pub use pretrain::{
    load_pretrained, pretrain, pretrain_with, sample_formula, trainable_for_pretraining, PretrainConfig,
    PretrainOutcome, SamplerConfig,
};
pub use replay::{ReplayBuffer, ReplayEntry, TaskTokens};
pub use tabular::{train_tabular, TabularLearner, TabularOutcome, TabularQ};
pub use train::{episode_seed, evaluate_policy, t_opti, train_neural, NeuralOutcome, NeuralTrainer};

use rand::Rng;
use thiserror::Error;

use crate::encoder::EncoderError;
use crate::envs::EnvError;
use crate::ltl::LtlError;
use crate::tensor::argmax;
use crate::tlmdp::TlError;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("update called with an empty batch")]
    EmptyBatch,
    #[error("tabular state space of {0} entries is too large")]
    StateSpaceTooLarge(usize),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("no trainable task: {0}")]
    NoTrainableTask(String),
    #[error(transparent)]
    Ltl(#[from] LtlError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Tl(#[from] TlError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Uniform action with probability `epsilon`, else the greedy action (ties to
/// the lowest action id).
pub fn act_epsilon_greedy<R: Rng>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.len())
    } else {
        argmax(q)
    }
}
