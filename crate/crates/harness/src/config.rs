//! Experiment configuration as flat `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional except `formula`; see [`KEYS`] for the full list. Errors carry
//! the dotted path of the offending field.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use t2tl::encoder::EncoderConfig;
use t2tl::learner::{OptimizerKind, PretrainConfig, TrainConfig};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Dotted field path, when the error is about one field.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::Syntax { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LearnerMode {
    Tabular,
    Neural,
}

impl LearnerMode {
    pub fn name(self) -> &'static str {
        match self {
            LearnerMode::Tabular => "tabular",
            LearnerMode::Neural => "neural",
        }
    }
}

/// Pre-training settings; the encoder shape is shared with the downstream run.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainSettings {
    /// Propositions of the single-state MDP; the environment alphabet when empty.
    pub alphabet: Vec<String>,
    pub budget: usize,
    pub window: usize,
    pub threshold: f64,
    pub max_members: usize,
    pub step_cap: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
}

impl Default for PretrainSettings {
    fn default() -> Self {
        let d = PretrainConfig::default();
        Self {
            alphabet: Vec::new(),
            budget: d.budget,
            window: d.window,
            threshold: d.threshold,
            max_members: d.max_members,
            step_cap: d.train.step_cap.unwrap_or(10),
            optimizer: d.train.optimizer,
            lr: d.train.lr,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: String,
    pub layout: Option<PathBuf>,
    /// Single-state propositions.
    pub alphabet: Vec<String>,
    pub patch: usize,
    pub formula: String,
    pub mode: LearnerMode,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub pretrained: Option<PathBuf>,
    /// `encoder.d_out` is the representation width `D_repr`; the context
    /// encoder shares layers, heads and widths and pools to `context.d_ctx`.
    pub train: TrainConfig,
    pub sweep_d_repr: Vec<usize>,
    pub eval_episodes: usize,
    pub pretrain: PretrainSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: "office".into(),
            layout: None,
            alphabet: Vec::new(),
            patch: 5,
            formula: String::new(),
            mode: LearnerMode::Neural,
            seeds: vec![0],
            out: PathBuf::from("runs"),
            pretrained: None,
            train: TrainConfig::default(),
            sweep_d_repr: Vec::new(),
            eval_episodes: 100,
            pretrain: PretrainSettings::default(),
        }
    }
}

/// Every accepted key, in the order [`ExperimentConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "env",
    "layout",
    "alphabet",
    "patch",
    "formula",
    "mode",
    "seeds",
    "out",
    "pretrained",
    "encoder.layers",
    "encoder.heads",
    "encoder.d_model",
    "encoder.d_ff",
    "encoder.d_repr",
    "context.enabled",
    "context.d_ctx",
    "context.window",
    "train.episodes",
    "train.gamma",
    "train.lr",
    "train.optimizer",
    "train.hidden",
    "train.eps_start",
    "train.eps_end",
    "train.eps_decay_fraction",
    "train.buffer_capacity",
    "train.batch_size",
    "train.target_sync",
    "train.step_cap",
    "train.simultaneous",
    "train.train_every",
    "train.learning_starts",
    "train.grad_clip",
    "train.wall_time",
    "sweep.d_repr",
    "eval.episodes",
    "pretrain.alphabet",
    "pretrain.budget",
    "pretrain.window",
    "pretrain.threshold",
    "pretrain.max_members",
    "pretrain.step_cap",
    "pretrain.optimizer",
    "pretrain.lr",
];

fn scalar<T: FromStr>(field: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e: T::Err| ConfigError::invalid(field, format!("`{raw}`: {e}")))
}

fn list<T: FromStr>(field: &str, raw: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(field, s))
        .collect()
}

fn names(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn optimizer(field: &str, raw: &str) -> Result<OptimizerKind, ConfigError> {
    OptimizerKind::parse(raw).ok_or_else(|| ConfigError::invalid(field, format!("unknown optimizer `{raw}`")))
}

/// `none` or a value.
fn optional<T: FromStr>(field: &str, raw: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    if raw == "none" {
        Ok(None)
    } else {
        scalar(field, raw).map(Some)
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn show_optional<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), ToString::to_string)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<&str, &str> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::invalid(key, "unknown key"));
            }
            if entries.insert(key, value).is_some() {
                return Err(ConfigError::invalid(key, "given more than once"));
            }
        }
        let mut cfg = ExperimentConfig::default();
        for (&key, &raw) in &entries {
            cfg.set(key, raw)?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    /// Assigns one field from its textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        match key {
            "env" => self.env = raw.to_string(),
            "layout" => self.layout = (raw != "none").then(|| PathBuf::from(raw)),
            "alphabet" => self.alphabet = names(raw),
            "patch" => self.patch = scalar(key, raw)?,
            "formula" => self.formula = raw.to_string(),
            "mode" => {
                self.mode = match raw {
                    "tabular" => LearnerMode::Tabular,
                    "neural" => LearnerMode::Neural,
                    _ => return Err(ConfigError::invalid(key, format!("`{raw}` is not tabular or neural"))),
                }
            }
            "seeds" => self.seeds = list(key, raw)?,
            "out" => self.out = PathBuf::from(raw),
            "pretrained" => self.pretrained = (raw != "none").then(|| PathBuf::from(raw)),
            "encoder.layers" => {
                self.train.encoder.layers = scalar(key, raw)?;
                self.train.context_encoder.layers = self.train.encoder.layers;
            }
            "encoder.heads" => {
                self.train.encoder.heads = scalar(key, raw)?;
                self.train.context_encoder.heads = self.train.encoder.heads;
            }
            "encoder.d_model" => {
                self.train.encoder.d_model = scalar(key, raw)?;
                self.train.context_encoder.d_model = self.train.encoder.d_model;
            }
            "encoder.d_ff" => {
                self.train.encoder.d_ff = scalar(key, raw)?;
                self.train.context_encoder.d_ff = self.train.encoder.d_ff;
            }
            "encoder.d_repr" => self.train.encoder.d_out = scalar(key, raw)?,
            "context.enabled" => self.train.context = scalar(key, raw)?,
            "context.d_ctx" => self.train.context_encoder.d_out = scalar(key, raw)?,
            "context.window" => self.train.window = scalar(key, raw)?,
            "train.episodes" => self.train.episodes = scalar(key, raw)?,
            "train.gamma" => self.train.gamma = scalar(key, raw)?,
            "train.lr" => self.train.lr = scalar(key, raw)?,
            "train.optimizer" => self.train.optimizer = optimizer(key, raw)?,
            "train.hidden" => self.train.hidden = list(key, raw)?,
            "train.eps_start" => self.train.eps_start = scalar(key, raw)?,
            "train.eps_end" => self.train.eps_end = scalar(key, raw)?,
            "train.eps_decay_fraction" => self.train.eps_decay_fraction = scalar(key, raw)?,
            "train.buffer_capacity" => self.train.buffer_capacity = scalar(key, raw)?,
            "train.batch_size" => self.train.batch_size = scalar(key, raw)?,
            "train.target_sync" => self.train.target_sync = scalar(key, raw)?,
            "train.step_cap" => self.train.step_cap = optional(key, raw)?,
            "train.simultaneous" => self.train.simultaneous = scalar(key, raw)?,
            "train.train_every" => self.train.train_every = scalar(key, raw)?,
            "train.learning_starts" => self.train.learning_starts = scalar(key, raw)?,
            "train.grad_clip" => self.train.grad_clip = optional(key, raw)?,
            "train.wall_time" => self.train.wall_time = scalar(key, raw)?,
            "sweep.d_repr" => self.sweep_d_repr = list(key, raw)?,
            "eval.episodes" => self.eval_episodes = scalar(key, raw)?,
            "pretrain.alphabet" => self.pretrain.alphabet = names(raw),
            "pretrain.budget" => self.pretrain.budget = scalar(key, raw)?,
            "pretrain.window" => self.pretrain.window = scalar(key, raw)?,
            "pretrain.threshold" => self.pretrain.threshold = scalar(key, raw)?,
            "pretrain.max_members" => self.pretrain.max_members = scalar(key, raw)?,
            "pretrain.step_cap" => self.pretrain.step_cap = scalar(key, raw)?,
            "pretrain.optimizer" => self.pretrain.optimizer = optimizer(key, raw)?,
            "pretrain.lr" => self.pretrain.lr = scalar(key, raw)?,
            _ => return Err(ConfigError::invalid(key, "unknown key")),
        }
        Ok(())
    }

    /// Field-level checks that need no files or alphabets.
    pub fn check(&self) -> Result<(), ConfigError> {
        if !["office", "minicraft", "single-state"].contains(&self.env.as_str()) {
            return Err(ConfigError::invalid("env", format!("unknown environment `{}`", self.env)));
        }
        if self.formula.is_empty() {
            return Err(ConfigError::invalid("formula", "missing"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid("seeds", "at least one seed is required"));
        }
        if self.patch == 0 {
            return Err(ConfigError::invalid("patch", "must be positive"));
        }
        if self.train.hidden.is_empty() || self.train.hidden.contains(&0) {
            return Err(ConfigError::invalid("train.hidden", "needs one or more positive widths"));
        }
        if self.sweep_d_repr.contains(&0) {
            return Err(ConfigError::invalid("sweep.d_repr", "widths must be positive"));
        }
        if !self.sweep_d_repr.is_empty() && self.mode == LearnerMode::Tabular {
            return Err(ConfigError::invalid("sweep.d_repr", "needs mode = neural"));
        }
        let p = &self.pretrain;
        if !(0.0..=1.0).contains(&p.threshold) {
            return Err(ConfigError::invalid("pretrain.threshold", "outside [0, 1]"));
        }
        if p.window == 0 {
            return Err(ConfigError::invalid("pretrain.window", "must be positive"));
        }
        if p.step_cap == 0 {
            return Err(ConfigError::invalid("pretrain.step_cap", "must be positive"));
        }
        let t = &self.train;
        let positive = [
            ("train.batch_size", t.batch_size),
            ("train.buffer_capacity", t.buffer_capacity),
            ("train.target_sync", t.target_sync as usize),
            ("train.train_every", t.train_every),
            ("context.window", t.window),
            ("train.step_cap", t.step_cap.unwrap_or(1)),
        ];
        if let Some((field, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::invalid(field, "must be positive"));
        }
        if !(t.gamma > 0.0 && t.gamma <= 1.0) {
            return Err(ConfigError::invalid("train.gamma", format!("{} outside (0, 1]", t.gamma)));
        }
        for (field, v) in [
            ("train.eps_start", t.eps_start),
            ("train.eps_end", t.eps_end),
            ("train.eps_decay_fraction", t.eps_decay_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::invalid(field, format!("{v} outside [0, 1]")));
            }
        }
        for (field, v) in [("train.lr", t.lr), ("pretrain.lr", p.lr)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(field, format!("{v} must be finite and non-negative")));
            }
        }
        check_encoder("encoder", &t.encoder)?;
        check_encoder("context", &t.context_encoder)?;
        t.validate().map_err(|e| ConfigError::invalid("train", e.to_string()))?;
        Ok(())
    }

    /// Pre-training configuration derived from these settings and `seed`.
    pub fn pretrain_config(&self, seed: u64) -> PretrainConfig {
        let mut cfg = PretrainConfig::default();
        cfg.budget = self.pretrain.budget;
        cfg.window = self.pretrain.window;
        cfg.threshold = self.pretrain.threshold;
        cfg.max_members = self.pretrain.max_members;
        cfg.train.step_cap = Some(self.pretrain.step_cap);
        cfg.train.optimizer = self.pretrain.optimizer;
        cfg.train.lr = self.pretrain.lr;
        cfg.train.encoder = self.train.encoder;
        cfg.train.hidden = self.train.hidden.clone();
        cfg.train.gamma = self.train.gamma;
        cfg.train.seed = seed;
        cfg
    }

    /// Effective configuration with every key, parseable by [`Self::parse`].
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let p = &self.pretrain;
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string());
        let values: Vec<(&str, String)> = vec![
            ("env", self.env.clone()),
            ("layout", path(&self.layout)),
            ("alphabet", self.alphabet.join(",")),
            ("patch", self.patch.to_string()),
            ("formula", self.formula.clone()),
            ("mode", self.mode.name().to_string()),
            ("seeds", join(&self.seeds)),
            ("out", self.out.display().to_string()),
            ("pretrained", path(&self.pretrained)),
            ("encoder.layers", t.encoder.layers.to_string()),
            ("encoder.heads", t.encoder.heads.to_string()),
            ("encoder.d_model", t.encoder.d_model.to_string()),
            ("encoder.d_ff", t.encoder.d_ff.to_string()),
            ("encoder.d_repr", t.encoder.d_out.to_string()),
            ("context.enabled", t.context.to_string()),
            ("context.d_ctx", t.context_encoder.d_out.to_string()),
            ("context.window", t.window.to_string()),
            ("train.episodes", t.episodes.to_string()),
            ("train.gamma", t.gamma.to_string()),
            ("train.lr", t.lr.to_string()),
            ("train.optimizer", t.optimizer.name().to_string()),
            ("train.hidden", join(&t.hidden)),
            ("train.eps_start", t.eps_start.to_string()),
            ("train.eps_end", t.eps_end.to_string()),
            ("train.eps_decay_fraction", t.eps_decay_fraction.to_string()),
            ("train.buffer_capacity", t.buffer_capacity.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.target_sync", t.target_sync.to_string()),
            ("train.step_cap", show_optional(&t.step_cap)),
            ("train.simultaneous", t.simultaneous.to_string()),
            ("train.train_every", t.train_every.to_string()),
            ("train.learning_starts", t.learning_starts.to_string()),
            ("train.grad_clip", show_optional(&t.grad_clip)),
            ("train.wall_time", t.wall_time.to_string()),
            ("sweep.d_repr", join(&self.sweep_d_repr)),
            ("eval.episodes", self.eval_episodes.to_string()),
            ("pretrain.alphabet", p.alphabet.join(",")),
            ("pretrain.budget", p.budget.to_string()),
            ("pretrain.window", p.window.to_string()),
            ("pretrain.threshold", p.threshold.to_string()),
            ("pretrain.max_members", p.max_members.to_string()),
            ("pretrain.step_cap", p.step_cap.to_string()),
            ("pretrain.optimizer", p.optimizer.name().to_string()),
            ("pretrain.lr", p.lr.to_string()),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        let mut out = String::new();
        for (k, v) in values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn check_encoder(prefix: &str, c: &EncoderConfig) -> Result<(), ConfigError> {
    c.validate().map_err(|e| {
        let field = if e.to_string().contains("heads") {
            "encoder.heads"
        } else if c.d_out == 0 && prefix == "context" {
            "context.d_ctx"
        } else if c.d_out == 0 {
            "encoder.d_repr"
        } else if c.d_ff == 0 {
            "encoder.d_ff"
        } else {
            "encoder.d_model"
        };
        ConfigError::invalid(field, e.to_string())
    })?;
    if c.layers == 0 {
        return Err(ConfigError::invalid("encoder.layers", "must be positive"));
    }
    Ok(())
}
