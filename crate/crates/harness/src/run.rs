use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use t2tl::checkpoint::{Checkpoint, CheckpointKind};
use t2tl::encoder::{key_attention_totals, write_attention_dump, EncoderParams, TokenVocab};
use t2tl::envs::{make_env, Environment, GridLayout};
use t2tl::learner::{
    episode_seed, evaluate_policy, pretrain, rolling_success, shortest_steps, train_tabular, write_metrics_csv,
    DqnAgent, EpisodeMetrics, EvalSummary, LearnerError, NeuralTrainer,
};
use t2tl::ltl::{closure, parse, Alphabet, Formula, TaskSet};
use t2tl::tlmdp::TlMdp;

use crate::config::{ConfigError, ExperimentConfig, LearnerMode};
use crate::manifest::{RunManifest, SeedEntry};
use crate::HarnessError;

pub type BoxedEnv = Box<dyn Environment + Send>;

/// Inputs resolved from a configuration before any file is written.
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub layout: Option<(GridLayout, Vec<u8>)>,
    pub formula: Formula,
    pub tasks: Arc<TaskSet>,
    pub pretrained: Option<PretrainedEncoder>,
}

pub struct PretrainedEncoder {
    pub bytes: Vec<u8>,
    pub vocab: TokenVocab,
    pub params: EncoderParams,
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Builds the configured environment.
pub fn build_env(cfg: &ExperimentConfig, layout: Option<&GridLayout>) -> Result<BoxedEnv, HarnessError> {
    let alphabet = if cfg.alphabet.is_empty() {
        None
    } else {
        Some(Alphabet::new(cfg.alphabet.iter().map(String::as_str)).map_err(|e| ConfigError::invalid("alphabet", e.to_string()))?)
    };
    make_env(&cfg.env, layout, alphabet.as_ref(), cfg.patch).map_err(|e| ConfigError::invalid("env", e.to_string()).into())
}

/// Resolves files, the formula and its closure; fails with a config error
/// when any input is unusable.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    cfg.check()?;
    let layout = match &cfg.layout {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| ConfigError::invalid("layout", format!("{}: {e}", path.display())))?;
            let text = String::from_utf8_lossy(&bytes);
            let layout = GridLayout::parse(&text).map_err(|e| ConfigError::invalid("layout", e.to_string()))?;
            Some((layout, bytes))
        }
        None => None,
    };
    let env = build_env(cfg, layout.as_ref().map(|(l, _)| l))?;
    let formula = parse(&cfg.formula, env.alphabet()).map_err(|e| ConfigError::invalid("formula", e.to_string()))?;
    let tasks = Arc::new(closure(&formula, env.alphabet()).map_err(|e| ConfigError::invalid("formula", e.to_string()))?);
    let pretrained = match &cfg.pretrained {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| ConfigError::invalid("pretrained", format!("{}: {e}", path.display())))?;
            let ck = Checkpoint::read_from(&mut bytes.as_slice())
                .map_err(|e| ConfigError::invalid("pretrained", e.to_string()))?;
            let (vocab, params) = ck.encoder().map_err(|e| ConfigError::invalid("pretrained", e.to_string()))?;
            // a throwaway agent surfaces shape and vocabulary mismatches now
            let mut probe = agent_for(cfg, env.as_ref(), 0)?;
            t2tl::learner::load_pretrained(&mut probe, &vocab, &params)?;
            Some(PretrainedEncoder { bytes, vocab, params })
        }
        None => None,
    };
    Ok(Prepared {
        cfg: cfg.clone(),
        layout,
        formula,
        tasks,
        pretrained,
    })
}

fn agent_for(cfg: &ExperimentConfig, env: &dyn Environment, seed: u64) -> Result<DqnAgent, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DqnAgent::new(
        &cfg.train,
        TokenVocab::new(env.alphabet()),
        env.feature_len(),
        env.num_actions(),
        &mut rng,
    )?)
}

impl Prepared {
    pub fn env(&self) -> Result<BoxedEnv, HarnessError> {
        build_env(&self.cfg, self.layout.as_ref().map(|(l, _)| l))
    }

    fn step_cap(&self, env: &dyn Environment) -> usize {
        self.cfg.train.step_cap.unwrap_or_else(|| env.default_step_cap())
    }

    /// Fewest steps to complete the task from the first training episode of `seed`.
    pub fn t_opti(&self, seed: u64) -> Result<Option<usize>, HarnessError> {
        let env = self.env()?;
        let cap = self.step_cap(env.as_ref());
        let mut mdp = TlMdp::with_step_cap(env, self.tasks.clone(), cap);
        let start = mdp.reset(episode_seed(seed, 0));
        Ok(shortest_steps(mdp.env(), &self.tasks, start))
    }

    fn inputs(&self) -> Vec<(&str, &[u8])> {
        let mut v: Vec<(&str, &[u8])> = Vec::new();
        if let Some((_, bytes)) = &self.layout {
            v.push(("layout", bytes));
        }
        if let Some(p) = &self.pretrained {
            v.push(("pretrained", &p.bytes));
        }
        v
    }
}

/// Episodes after which the attention of the root task is dumped: before
/// training, halfway and at the end.
pub fn dump_episodes(episodes: usize) -> Vec<usize> {
    let mut v = vec![0, episodes / 2, episodes];
    v.dedup();
    v
}

fn seed_files(cfg: &ExperimentConfig, seed: u64) -> Vec<(String, String)> {
    let dir = format!("seed-{seed}");
    let mut files = vec![
        ("metrics".to_string(), format!("{dir}/metrics.csv")),
        ("checkpoint".to_string(), format!("{dir}/checkpoint.t2tl")),
    ];
    if cfg.mode == LearnerMode::Neural {
        for e in dump_episodes(cfg.train.episodes) {
            files.push((format!("attention.ep{e}"), format!("{dir}/attention-ep{e}.tsv")));
        }
    }
    files
}

#[derive(Clone, Debug)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: Vec<EpisodeMetrics>,
    pub files: Vec<(String, PathBuf)>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub dir: PathBuf,
    pub seeds: Vec<SeedResult>,
}

/// Runs every configured seed, or one run directory per `sweep.d_repr` width.
pub fn train(cfg: &ExperimentConfig, log: &mut dyn Write) -> Result<Vec<RunResult>, HarnessError> {
    let runs: Vec<ExperimentConfig> = if cfg.sweep_d_repr.is_empty() {
        vec![cfg.clone()]
    } else {
        cfg.sweep_d_repr
            .iter()
            .map(|&d| {
                let mut sub = cfg.clone();
                sub.sweep_d_repr.clear();
                sub.train.encoder.d_out = d;
                sub.out = cfg.out.join(format!("d_repr-{d}"));
                sub
            })
            .collect()
    };
    let prepared = runs.iter().map(prepare).collect::<Result<Vec<_>, _>>()?;
    prepared.iter().map(|p| train_prepared(p, log)).collect()
}

fn train_prepared(p: &Prepared, log: &mut dyn Write) -> Result<RunResult, HarnessError> {
    let cfg = &p.cfg;
    let mut entries = Vec::new();
    for &seed in &cfg.seeds {
        entries.push(SeedEntry {
            seed,
            t_opti: p.t_opti(seed)?,
            files: seed_files(cfg, seed),
        });
    }
    let manifest = RunManifest::new(&cfg.to_text(), &p.inputs(), entries.clone());
    manifest.write_new(&cfg.out).map_err(io_at(&cfg.out))?;
    let hash = manifest.input_hash();
    let mut results = Vec::new();
    for entry in &entries {
        let _ = writeln!(log, "training {} seed {} into {}", cfg.mode.name(), entry.seed, cfg.out.display());
        let files: Vec<(String, PathBuf)> = entry.files.iter().map(|(n, f)| (n.clone(), cfg.out.join(f))).collect();
        let path = |name: &str| files.iter().find(|(n, _)| n == name).map(|(_, p)| p.clone()).expect("listed artifact");
        let meta = vec![
            ("seed".to_string(), entry.seed.to_string()),
            ("env".to_string(), cfg.env.clone()),
            ("formula".to_string(), cfg.formula.clone()),
            ("mode".to_string(), cfg.mode.name().to_string()),
            ("input_hash".to_string(), hash.clone()),
        ];
        let mut train_cfg = cfg.train.clone();
        train_cfg.seed = entry.seed;
        let (metrics, checkpoint) = match cfg.mode {
            LearnerMode::Tabular => {
                let out = train_tabular(p.env()?, p.tasks.clone(), &train_cfg)?;
                let keys: Vec<String> = (0..p.tasks.len()).map(|i| p.tasks.key(i).to_string()).collect();
                (out.metrics, Checkpoint::from_table(&out.q, &keys, meta))
            }
            LearnerMode::Neural => {
                let mut trainer = NeuralTrainer::new(p.env()?, p.tasks.clone(), &train_cfg)?;
                if let Some(pre) = &p.pretrained {
                    trainer.load_encoder(&pre.vocab, &pre.params)?;
                }
                let dumps = dump_episodes(train_cfg.episodes);
                let mut metrics = Vec::with_capacity(train_cfg.episodes);
                for ep in 0..=train_cfg.episodes {
                    if dumps.contains(&ep) {
                        dump_attention(&trainer.agent, &p.formula, &path(&format!("attention.ep{ep}")))?;
                    }
                    if ep < train_cfg.episodes {
                        metrics.push(trainer.run_episode(ep)?);
                    }
                }
                (metrics, Checkpoint::from_agent(&trainer.agent, meta))
            }
        };
        let metrics_path = path("metrics");
        let mut w = create(&metrics_path)?;
        write_metrics_csv(&mut w, &metrics).map_err(io_at(&metrics_path))?;
        w.flush().map_err(io_at(&metrics_path))?;
        let ck_path = path("checkpoint");
        checkpoint.save(&ck_path)?;
        results.push(SeedResult {
            seed: entry.seed,
            metrics,
            files,
        });
    }
    Ok(RunResult {
        dir: cfg.out.clone(),
        seeds: results,
    })
}

/// Encodes `formula` once and writes its attention maps.
pub fn dump_attention(agent: &DqnAgent, formula: &Formula, path: &Path) -> Result<(), HarnessError> {
    let ids = agent.tokens(formula)?;
    let enc = agent.encoder.forward_tokens(&ids)?;
    let names: Vec<String> = agent.vocab.render(&ids).into_iter().map(String::from).collect();
    let mut w = create(path)?;
    write_attention_dump(&mut w, &enc.attention, &names).map_err(io_at(path))?;
    w.flush().map_err(io_at(path))
}

pub const CURVE_HEADER: &str = "episode,success,rolling_success";

#[derive(Clone, Debug)]
pub struct PretrainResult {
    pub converged: bool,
    pub episodes: usize,
    pub final_rolling: f64,
    pub checkpoint: PathBuf,
}

/// Pre-trains the formula encoder on the single-state MDP.
pub fn pretrain_run(cfg: &ExperimentConfig, seed: u64, log: &mut dyn Write) -> Result<PretrainResult, HarnessError> {
    cfg.check()?;
    let alphabet = if cfg.pretrain.alphabet.is_empty() {
        build_env(cfg, None)?.alphabet().clone()
    } else {
        Alphabet::new(cfg.pretrain.alphabet.iter().map(String::as_str))
            .map_err(|e| ConfigError::invalid("pretrain.alphabet", e.to_string()))?
    };
    let pcfg = cfg.pretrain_config(seed);
    pcfg.train.validate().map_err(|e| ConfigError::invalid("pretrain", e.to_string()))?;
    let files = vec![SeedEntry {
        seed,
        t_opti: None,
        files: vec![
            ("checkpoint".into(), "encoder.t2tl".into()),
            ("curve".into(), "pretrain_curve.csv".into()),
            ("metrics".into(), "metrics.csv".into()),
        ],
    }];
    RunManifest::new(&cfg.to_text(), &[], files)
        .write_new(&cfg.out)
        .map_err(io_at(&cfg.out))?;
    let _ = writeln!(log, "pre-training over {} propositions, budget {}", alphabet.len(), pcfg.budget);
    let out = pretrain(&alphabet, &pcfg)?;
    let meta = vec![
        ("seed".to_string(), seed.to_string()),
        ("pretrain.converged".to_string(), out.converged.to_string()),
        ("pretrain.episodes".to_string(), out.metrics.len().to_string()),
    ];
    let ck_path = cfg.out.join("encoder.t2tl");
    Checkpoint::from_encoder(&out.vocab, &out.encoder, meta).save(&ck_path)?;

    let curve_path = cfg.out.join("pretrain_curve.csv");
    let mut w = create(&curve_path)?;
    let mut body = format!("{CURVE_HEADER}\n");
    let rolling = rolling_success(&out.metrics, pcfg.window);
    for (m, r) in out.metrics.iter().zip(&rolling) {
        body.push_str(&format!("{},{},{r:.6}\n", m.episode, u8::from(m.success())));
    }
    w.write_all(body.as_bytes()).map_err(io_at(&curve_path))?;
    w.flush().map_err(io_at(&curve_path))?;
    let metrics_path = cfg.out.join("metrics.csv");
    let mut w = create(&metrics_path)?;
    write_metrics_csv(&mut w, &out.metrics).map_err(io_at(&metrics_path))?;
    w.flush().map_err(io_at(&metrics_path))?;
    Ok(PretrainResult {
        converged: out.converged,
        episodes: out.metrics.len(),
        final_rolling: rolling.last().copied().unwrap_or(0.0),
        checkpoint: ck_path,
    })
}

/// Greedy evaluation of a trained checkpoint on the configured task.
pub fn eval_run(cfg: &ExperimentConfig, checkpoint: &Path, seed: u64) -> Result<EvalSummary, HarnessError> {
    let p = prepare(cfg)?;
    let ck = Checkpoint::load(checkpoint)?;
    let env = p.env()?;
    let cap = p.step_cap(env.as_ref());
    let gamma = cfg.train.gamma;
    let episodes = cfg.eval_episodes;
    match ck.kind {
        CheckpointKind::Table => {
            let (keys, mut q) = ck.table()?;
            let ours: Vec<&str> = (0..p.tasks.len()).map(|i| p.tasks.key(i)).collect();
            if keys.iter().map(String::as_str).ne(ours.iter().copied()) {
                return Err(LearnerError::CheckpointMismatch("lookup table was trained on a different task".into()).into());
            }
            if q.num_states != env.num_states() || q.num_actions != env.num_actions() {
                return Err(LearnerError::CheckpointMismatch("lookup table has a different state or action count".into()).into());
            }
            let mut mdp = TlMdp::with_step_cap(env, p.tasks.clone(), cap);
            Ok(evaluate_policy(&mut q, &mut mdp, episodes, seed, gamma)?)
        }
        CheckpointKind::Agent => {
            let mut agent = agent_for(cfg, env.as_ref(), seed)?;
            ck.restore_agent(&mut agent)?;
            let mut mdp = TlMdp::with_step_cap(env, p.tasks.clone(), cap);
            Ok(evaluate_policy(&mut agent, &mut mdp, episodes, seed, gamma)?)
        }
        CheckpointKind::Encoder => Err(LearnerError::CheckpointMismatch(
            "checkpoint holds only a formula encoder; evaluate a trained agent".into(),
        )
        .into()),
    }
}

pub fn write_eval_csv(path: &Path, summary: &EvalSummary) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    write_metrics_csv(&mut w, &summary.episodes).map_err(io_at(path))?;
    w.flush().map_err(io_at(path))
}

/// Per-head summary of one attention pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionReport {
    pub tokens: Vec<String>,
    /// (layer, head, top token, its summed weight)
    pub top: Vec<(usize, usize, String, f64)>,
    /// Weight received by each position at layer 0, summed over heads and queries.
    pub layer0_totals: Vec<f64>,
}

impl AttentionReport {
    /// Largest over smallest summed token weight at layer 0.
    pub fn uniformity_ratio(&self) -> f64 {
        let max = self.layer0_totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.layer0_totals.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Runs `formula` through the checkpoint's formula encoder and writes the dump.
pub fn attention_run(checkpoint: &Path, formula: &str, out: &Path) -> Result<AttentionReport, HarnessError> {
    let ck = Checkpoint::load(checkpoint)?;
    if ck.kind == CheckpointKind::Table {
        return Err(LearnerError::CheckpointMismatch("a lookup table has no attention".into()).into());
    }
    let (vocab, params) = ck.encoder()?;
    let alphabet = Alphabet::new(vocab.propositions().iter().map(String::as_str)).map_err(HarnessError::Input)?;
    let f = parse(formula, &alphabet).map_err(HarnessError::Input)?;
    let ids = vocab.encode(&f)?;
    let enc = params.forward_tokens(&ids)?;
    let names: Vec<String> = vocab.render(&ids).into_iter().map(String::from).collect();
    let mut w = create(out)?;
    write_attention_dump(&mut w, &enc.attention, &names).map_err(io_at(out))?;
    w.flush().map_err(io_at(out))?;

    let mask = vec![false; ids.len()];
    let mut top = Vec::new();
    for (l, heads) in enc.attention.layers.iter().enumerate() {
        for (h, m) in heads.iter().enumerate() {
            let mut totals = vec![0.0; m.cols];
            for q in 0..m.rows {
                for (t, w) in totals.iter_mut().zip(m.row(q)) {
                    *t += w;
                }
            }
            let (k, w) = totals
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, w)| if w > best.1 { (k, w) } else { best });
            top.push((l, h, names[k].clone(), w));
        }
    }
    Ok(AttentionReport {
        layer0_totals: key_attention_totals(&enc.attention, 0, &mask),
        tokens: names,
        top,
    })
}
