use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::{episode_seed, t_opti};
use super::{
    act_epsilon_greedy, epsilon_at, performance, EpisodeMetrics, LearnerError, Observation, QFunction, TrainConfig,
};
use crate::envs::Environment;
use crate::ltl::TaskSet;
use crate::tensor::argmax;
use crate::tlmdp::{simultaneous_view, TlMdp};

/// Largest table the tabular learner will allocate.
const MAX_TABLE: usize = 1 << 24;

/// Action values keyed by (environment state, task index, action).
#[derive(Clone, Debug, PartialEq)]
pub struct TabularQ {
    pub num_states: usize,
    pub num_tasks: usize,
    pub num_actions: usize,
    pub values: Vec<f64>,
}

impl TabularQ {
    pub fn zeros(num_states: usize, num_tasks: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_tasks,
            num_actions,
            values: vec![0.0; num_states * num_tasks * num_actions],
        }
    }

    fn offset(&self, s: usize, t: usize) -> usize {
        (s * self.num_tasks + t) * self.num_actions
    }

    pub fn row(&self, s: usize, t: usize) -> &[f64] {
        let o = self.offset(s, t);
        &self.values[o..o + self.num_actions]
    }

    pub fn get(&self, s: usize, t: usize, a: usize) -> f64 {
        self.values[self.offset(s, t) + a]
    }

    pub fn set(&mut self, s: usize, t: usize, a: usize, v: f64) {
        let o = self.offset(s, t);
        self.values[o + a] = v;
    }

    pub fn max(&self, s: usize, t: usize) -> f64 {
        self.row(s, t).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute difference over the given product states.
    pub fn max_diff(&self, other: &TabularQ, states: &[(usize, usize)]) -> f64 {
        states
            .iter()
            .flat_map(|&(s, t)| self.row(s, t).iter().zip(other.row(s, t)))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl QFunction for TabularQ {
    fn q_values(&mut self, obs: &Observation<'_>) -> Result<Vec<f64>, LearnerError> {
        Ok(self.row(obs.env.key, obs.task).to_vec())
    }
}

/// Double Q-learning with lookup tables, using the same target rule and
/// simultaneous fan-out as the neural learner. The learning rate is `lr`.
pub struct TabularLearner<E> {
    pub mdp: TlMdp<E>,
    pub q: TabularQ,
    target: TabularQ,
    cfg: TrainConfig,
    rng: ChaCha8Rng,
    updates: u64,
}

#[derive(Clone, Debug)]
pub struct TabularOutcome {
    pub q: TabularQ,
    pub metrics: Vec<EpisodeMetrics>,
}

impl<E: Environment> TabularLearner<E> {
    pub fn new(env: E, tasks: Arc<TaskSet>, cfg: &TrainConfig) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let size = env
            .num_states()
            .saturating_mul(tasks.len())
            .saturating_mul(env.num_actions());
        if size > MAX_TABLE {
            return Err(LearnerError::StateSpaceTooLarge(size));
        }
        let q = TabularQ::zeros(env.num_states(), tasks.len(), env.num_actions());
        let mdp = match cfg.step_cap {
            Some(cap) => TlMdp::with_step_cap(env, tasks, cap),
            None => TlMdp::new(env, tasks),
        };
        Ok(Self {
            mdp,
            target: q.clone(),
            q,
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            updates: 0,
        })
    }

    fn update(&mut self, s: usize, t: usize, a: usize, reward: i8, next: Option<(usize, usize)>) {
        let mut y = f64::from(reward);
        if let Some((s2, t2)) = next {
            let best = argmax(self.q.row(s2, t2));
            y += self.cfg.gamma * self.target.get(s2, t2, best);
        }
        let old = self.q.get(s, t, a);
        self.q.set(s, t, a, old + self.cfg.lr * (y - old));
        self.updates += 1;
        if self.updates % self.cfg.target_sync == 0 {
            self.target.values.copy_from_slice(&self.q.values);
        }
    }

    pub fn run_episode(&mut self, episode: usize) -> Result<EpisodeMetrics, LearnerError> {
        let clock = Instant::now();
        let epsilon = epsilon_at(&self.cfg, episode);
        let mut state = self.mdp.reset(episode_seed(self.cfg.seed, episode));
        let tasks = self.mdp.tasks().clone();
        let optimal = t_opti(&self.mdp, state);
        let mut ret = state.task.reward();
        let mut steps = 0;
        while let Some(task) = state.task.active().filter(|_| !state.env.terminal) {
            let action = act_epsilon_greedy(self.q.row(state.env.key, task), epsilon, &mut self.rng);
            let t = self.mdp.step(action)?;
            steps += 1;
            ret = t.reward;
            let (s, s2) = (state.env.key, t.next.env.key);
            if self.cfg.simultaneous {
                for view in simultaneous_view(&t, &tasks) {
                    let next = if view.terminal { None } else { view.next.active().map(|j| (s2, j)) };
                    self.update(s, view.task, action, view.reward, next);
                }
            } else {
                let next = if t.next.is_terminal() { None } else { t.next.task.active().map(|j| (s2, j)) };
                self.update(s, task, action, t.reward, next);
            }
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
}

/// Runs `cfg.episodes` tabular episodes.
pub fn train_tabular<E: Environment>(env: E, tasks: Arc<TaskSet>, cfg: &TrainConfig) -> Result<TabularOutcome, LearnerError> {
    let mut learner = TabularLearner::new(env, tasks, cfg)?;
    let metrics = (0..cfg.episodes)
        .map(|ep| learner.run_episode(ep))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TabularOutcome { q: learner.q, metrics })
}
