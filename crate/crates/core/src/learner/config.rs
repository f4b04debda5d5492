use super::{LearnerError, OptimizerKind};
use crate::encoder::EncoderConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of the episode budget over which epsilon decays linearly.
    pub eps_decay_fraction: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Target networks are synchronized every this many updates.
    pub target_sync: u64,
    pub episodes: usize,
    /// Per-episode step cap; `None` uses the environment default.
    pub step_cap: Option<usize>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub hidden: Vec<usize>,
    pub simultaneous: bool,
    pub context: bool,
    /// Environment steps between updates.
    pub train_every: usize,
    /// Buffer entries required before the first update.
    pub learning_starts: usize,
    pub grad_clip: Option<f64>,
    pub encoder: EncoderConfig,
    pub context_encoder: EncoderConfig,
    pub window: usize,
    /// Record real elapsed time in the metrics (makes them non-reproducible).
    pub wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            lr: 1e-3,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_fraction: 0.3,
            buffer_capacity: 50_000,
            batch_size: 64,
            target_sync: 500,
            episodes: 1000,
            step_cap: None,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            hidden: vec![64, 64],
            simultaneous: true,
            context: false,
            train_every: 1,
            learning_starts: 64,
            grad_clip: None,
            encoder: EncoderConfig::default(),
            context_encoder: EncoderConfig::default(),
            window: 8,
            wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: String| Err(LearnerError::ConfigInvalid(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        for (name, v) in [("eps_start", self.eps_start), ("eps_end", self.eps_end)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.eps_decay_fraction) {
            return bad(format!("eps_decay_fraction {} outside [0, 1]", self.eps_decay_fraction));
        }
        if self.lr < 0.0 || !self.lr.is_finite() {
            return bad(format!("learning rate {} must be finite and non-negative", self.lr));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.target_sync == 0 || self.train_every == 0 {
            return bad("batch_size, buffer_capacity, target_sync and train_every must be positive".into());
        }
        if self.window == 0 {
            return bad("context window must be positive".into());
        }
        if self.step_cap == Some(0) {
            return bad("step cap must be positive".into());
        }
        self.encoder.validate()?;
        self.context_encoder.validate()?;
        Ok(())
    }
}

/// Exploration rate at the start of `episode` (0-based).
pub fn epsilon_at(cfg: &TrainConfig, episode: usize) -> f64 {
    let span = cfg.eps_decay_fraction * cfg.episodes as f64;
    if span <= 0.0 {
        return cfg.eps_end;
    }
    let t = episode as f64 / span;
    if t >= 1.0 {
        return cfg.eps_end;
    }
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * t
}
