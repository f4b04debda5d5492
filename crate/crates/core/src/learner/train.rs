use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    act_epsilon_greedy, epsilon_at, load_pretrained, performance, shortest_steps, DqnAgent, EpisodeMetrics,
    EvalSummary, LearnerError, Observation, QFunction, ReplayBuffer, ReplayEntry, TaskTokens, TrainConfig,
};
use crate::encoder::{ContextWindow, EncoderParams, TokenVocab};
use crate::envs::Environment;
use crate::ltl::TaskSet;
use crate::tensor::argmax;
use crate::tlmdp::{simultaneous_view, TlError, TlMdp, TlState, TlTransition};

/// Reset seed of a training or evaluation episode.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(episode as u64)
}

/// Optimal step count from `start`; the step cap when the task cannot be
/// completed.
pub fn t_opti<E: Environment>(mdp: &TlMdp<E>, start: TlState) -> usize {
    shortest_steps(mdp.env(), mdp.tasks(), start)
        .unwrap_or(mdp.step_cap())
        .max(1)
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Neural learner bound to one TL-MDP: acts, fans transitions out into the
/// replay buffer and runs double-DQN updates.
pub struct NeuralTrainer<E> {
    pub mdp: TlMdp<E>,
    pub agent: DqnAgent,
    pub buffer: ReplayBuffer,
    cfg: TrainConfig,
    window: Option<ContextWindow>,
    tokens: Vec<TaskTokens>,
    features: Option<Arc<[f64]>>,
    z: Option<Arc<[f64]>>,
    act_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    env_steps: u64,
    last_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct NeuralOutcome {
    pub agent: DqnAgent,
    pub metrics: Vec<EpisodeMetrics>,
}

impl<E: Environment> NeuralTrainer<E> {
    pub fn new(env: E, tasks: Arc<TaskSet>, cfg: &TrainConfig) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let vocab = TokenVocab::new(env.alphabet());
        let mut init_rng = seeded(cfg.seed, 0);
        let agent = DqnAgent::new(cfg, vocab, env.feature_len(), env.num_actions(), &mut init_rng)?;
        let window = cfg
            .context
            .then(|| ContextWindow::new(cfg.window, env.feature_len(), env.num_actions()));
        let mdp = match cfg.step_cap {
            Some(cap) => TlMdp::with_step_cap(env, tasks, cap),
            None => TlMdp::new(env, tasks),
        };
        let mut trainer = Self {
            mdp,
            agent,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg: cfg.clone(),
            window,
            tokens: Vec::new(),
            features: None,
            z: None,
            act_rng: seeded(cfg.seed, 1),
            sample_rng: seeded(cfg.seed, 2),
            env_steps: 0,
            last_loss: None,
        };
        trainer.refresh_tokens()?;
        Ok(trainer)
    }

    fn refresh_tokens(&mut self) -> Result<(), LearnerError> {
        self.tokens = self
            .mdp
            .tasks()
            .members()
            .iter()
            .map(|f| self.agent.tokens(f))
            .collect::<Result<_, _>>()?;
        Ok(())
    }

    /// Swaps the task closure; the next episode starts from its root.
    pub fn set_tasks(&mut self, tasks: Arc<TaskSet>) -> Result<(), LearnerError> {
        self.mdp.set_tasks(tasks);
        self.features = None;
        self.refresh_tokens()
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn window(&self) -> Option<&ContextWindow> {
        self.window.as_ref()
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    /// Initializes the formula encoder from pre-trained weights.
    pub fn load_encoder(&mut self, vocab: &TokenVocab, params: &EncoderParams) -> Result<(), LearnerError> {
        load_pretrained(&mut self.agent, vocab, params)
    }

    /// Resets the environment and clears the context window.
    pub fn reset(&mut self, seed: u64) -> Result<TlState, LearnerError> {
        let state = self.mdp.reset(seed);
        self.features = Some(self.mdp.env().features(&state.env).into());
        if let Some(w) = &mut self.window {
            w.clear();
        }
        self.z = self.context_snapshot()?;
        Ok(state)
    }

    fn context_snapshot(&self) -> Result<Option<Arc<[f64]>>, LearnerError> {
        match &self.window {
            Some(w) => Ok(self.agent.context_vector(w)?.map(Arc::from)),
            None => Ok(None),
        }
    }

    /// Takes one step under the current residual task's epsilon-greedy policy,
    /// stores one replay entry per closure member (or only the pursued task
    /// without simultaneous learning) and runs an update when due.
    pub fn collect_step(&mut self, epsilon: f64) -> Result<TlTransition, LearnerError> {
        let state = self.mdp.state().ok_or(TlError::NotReset)?;
        let task = state.task.active().ok_or(TlError::SteppedTerminal)?;
        let features = match &self.features {
            Some(f) => f.clone(),
            None => return Err(TlError::NotReset.into()),
        };
        let z = self.z.clone();
        let q = self.agent.q_values_for(&features, &self.tokens[task], z.as_deref())?;
        let action = act_epsilon_greedy(&q, epsilon, &mut self.act_rng);
        let t = self.mdp.step(action)?;

        let next_features: Arc<[f64]> = self.mdp.env().features(&t.next.env).into();
        if let Some(w) = &mut self.window {
            w.push(&features, action, f64::from(t.reward));
        }
        let next_z = self.context_snapshot()?;

        let entry = |task: TaskTokens, reward: i8, next_task: Option<TaskTokens>| ReplayEntry {
            features: features.clone(),
            label: t.label,
            action,
            task,
            reward,
            next_features: next_features.clone(),
            next_task,
            z: z.clone(),
            next_z: next_z.clone(),
        };
        if self.cfg.simultaneous {
            for view in simultaneous_view(&t, self.mdp.tasks()) {
                let next = match (view.terminal, view.next.active()) {
                    (false, Some(j)) => Some(self.tokens[j].clone()),
                    _ => None,
                };
                self.buffer.push(entry(self.tokens[view.task].clone(), view.reward, next));
            }
        } else {
            let next = match (t.next.is_terminal(), t.next.task.active()) {
                (false, Some(j)) => Some(self.tokens[j].clone()),
                _ => None,
            };
            self.buffer.push(entry(self.tokens[task].clone(), t.reward, next));
        }

        self.features = Some(next_features);
        self.z = next_z;
        self.env_steps += 1;
        let ready = self.buffer.len() >= self.cfg.learning_starts.max(1);
        if ready && self.env_steps % self.cfg.train_every as u64 == 0 {
            let batch = self.buffer.sample(self.cfg.batch_size, &mut self.sample_rng);
            self.last_loss = Some(self.agent.td_update(&batch)?);
        }
        Ok(t)
    }

    /// One training episode with the scheduled exploration rate.
    pub fn run_episode(&mut self, episode: usize) -> Result<EpisodeMetrics, LearnerError> {
        let clock = Instant::now();
        let epsilon = epsilon_at(&self.cfg, episode);
        let mut state = self.reset(episode_seed(self.cfg.seed, episode))?;
        let optimal = t_opti(&self.mdp, state);
        let mut ret = state.task.reward();
        let mut steps = 0;
        while !state.is_terminal() {
            let t = self.collect_step(epsilon)?;
            steps += 1;
            ret = t.reward;
            state = t.next;
            if t.done {
                break;
            }
        }
        Ok(EpisodeMetrics {
            episode,
            steps,
            ret,
            performance: performance(ret, steps, optimal, self.cfg.gamma),
            epsilon,
            wall_ms: if self.cfg.wall_time { clock.elapsed().as_millis() as u64 } else { 0 },
        })
    }

    /// Greedy evaluation of the current agent on this trainer's TL-MDP.
    pub fn evaluate(&mut self, episodes: usize, seed: u64) -> Result<EvalSummary, LearnerError> {
        let gamma = self.cfg.gamma;
        let summary = evaluate_policy(&mut self.agent, &mut self.mdp, episodes, seed, gamma)?;
        self.features = None;
        Ok(summary)
    }
}

/// Trains a neural learner for `cfg.episodes` episodes, optionally starting
/// from a pre-trained formula encoder.
pub fn train_neural<E: Environment>(
    env: E,
    tasks: Arc<TaskSet>,
    cfg: &TrainConfig,
    pretrained: Option<(&TokenVocab, &EncoderParams)>,
) -> Result<NeuralOutcome, LearnerError> {
    let mut trainer = NeuralTrainer::new(env, tasks, cfg)?;
    if let Some((vocab, params)) = pretrained {
        trainer.load_encoder(vocab, params)?;
    }
    let metrics = (0..cfg.episodes)
        .map(|ep| trainer.run_episode(ep))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NeuralOutcome {
        agent: trainer.agent,
        metrics,
    })
}

/// Greedy rollouts (ties to the lowest action id) scored with the discrete
/// performance metric against the per-episode optimal step count.
pub fn evaluate_policy<E: Environment>(
    q: &mut dyn QFunction,
    mdp: &mut TlMdp<E>,
    episodes: usize,
    seed: u64,
    gamma: f64,
) -> Result<EvalSummary, LearnerError> {
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut state = mdp.reset(episode_seed(seed, episode));
        let optimal = t_opti(mdp, state);
        let mut window = q
            .context_width()
            .map(|w| ContextWindow::new(w, mdp.env().feature_len(), mdp.env().num_actions()));
        let mut ret = state.task.reward();
        let mut steps = 0;
        while let Some(task) = state.task.active().filter(|_| !state.env.terminal) {
            let features = mdp.env().features(&state.env);
            let tasks = mdp.tasks().clone();
            let obs = Observation {
                env: state.env,
                features: &features,
                task,
                formula: tasks.member(task),
                history: window.as_ref(),
            };
            let action = argmax(&q.q_values(&obs)?);
            let t = mdp.step(action)?;
            if let Some(w) = &mut window {
                w.push(&features, action, f64::from(t.reward));
            }
            steps += 1;
            ret = t.reward;
            state = t.next;
            if t.done {
                break;
            }
        }
        out.push(EpisodeMetrics {
            episode,
            steps,
            ret,
            performance: performance(ret, steps, optimal, gamma),
            epsilon: 0.0,
            wall_ms: 0,
        });
    }
    Ok(EvalSummary::from_episodes(out))
}
