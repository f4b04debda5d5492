use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use t2tl::encoder::TokenVocab;
use t2tl::envs::{make_env, Environment};
use t2tl::learner::EvalSummary;
use t2tl::ltl::{closure, parse, progress, settle, simplify, Alphabet, LabelSet, Settled, TaskRef};

use crate::config::{ConfigError, ExperimentConfig};
use crate::run::{attention_run, eval_run, pretrain_run, train, write_eval_csv};
use crate::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "t2tl", version, about = "Temporal-logic task learning with a transformer formula encoder")]
pub struct Cli {
    /// Experiment configuration file (flat `key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run only this seed instead of the configured list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output location; overrides the `out` key.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// Where formula propositions come from for the formula tools.
#[derive(Debug, Args)]
pub struct AlphabetArgs {
    /// Comma-separated proposition names.
    #[arg(long, value_delimiter = ',')]
    pub props: Vec<String>,
    /// Take the alphabet of a named environment.
    #[arg(long)]
    pub env: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a formula and print its canonical form and tokens.
    Parse {
        formula: String,
        #[command(flatten)]
        alphabet: AlphabetArgs,
    },
    /// Progress a formula through a sequence of labels such as `{a,b}`.
    Progress {
        formula: String,
        labels: Vec<String>,
        #[command(flatten)]
        alphabet: AlphabetArgs,
    },
    /// Print the progression closure of a formula and its transitions.
    Closure {
        formula: String,
        #[command(flatten)]
        alphabet: AlphabetArgs,
    },
    /// Pre-train the formula encoder on the single-state MDP.
    Pretrain,
    /// Train on the configured environment and task.
    Train,
    /// Greedy evaluation of a trained checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Dump the attention of a checkpoint's encoder on one formula.
    Attention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        formula: String,
    },
}

/// How a successful command ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Done,
    /// Pre-training ran out of budget before converging.
    BudgetExhausted,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Done => 0,
            Status::BudgetExhausted => 4,
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| HarnessError::Usage("this command needs --config".into()))?;
    let text = fs::read_to_string(path).map_err(|e| ConfigError::invalid("--config", format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn alphabet_for(cli: &Cli, args: &AlphabetArgs) -> Result<Alphabet, HarnessError> {
    if !args.props.is_empty() {
        return Alphabet::new(args.props.iter().map(String::as_str)).map_err(HarnessError::Input);
    }
    let env_name = match (&args.env, &cli.config) {
        (Some(name), _) => name.clone(),
        (None, Some(_)) => load_config(cli)?.env,
        (None, None) => return Err(HarnessError::Usage("give --props, --env or --config".into())),
    };
    let env = make_env(&env_name, None, None, 1).map_err(|e| HarnessError::Usage(e.to_string()))?;
    Ok(env.alphabet().clone())
}

/// Labels worth enumerating: those the named environment can produce, or
/// every subset of the alphabet.
fn label_universe(args: &AlphabetArgs, alphabet: &Alphabet) -> Vec<LabelSet> {
    match &args.env {
        Some(name) if args.props.is_empty() => match make_env(name, None, None, 1) {
            Ok(env) => env.label_universe(),
            Err(_) => alphabet.all_labels().collect(),
        },
        _ => alphabet.all_labels().collect(),
    }
}

fn print_summary(out: &mut dyn Write, s: &EvalSummary) {
    let _ = writeln!(out, "episodes {}", s.episodes.len());
    let _ = writeln!(out, "mean_performance {:.6}", s.mean_performance);
    let _ = writeln!(out, "median_performance {:.6}", s.median_performance);
    let _ = writeln!(out, "success_rate {:.6}", s.success_rate);
    let _ = writeln!(out, "mean_steps {:.3}", s.mean_steps);
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Status, HarnessError> {
    match &cli.command {
        Command::Parse { formula, alphabet } => {
            let ab = alphabet_for(cli, alphabet)?;
            let f = parse(formula, &ab).map_err(HarnessError::Input)?;
            let canonical = simplify(&f);
            let vocab = TokenVocab::new(&ab);
            let ids = vocab.encode(&canonical)?;
            let _ = writeln!(out, "parsed    {f}");
            let _ = writeln!(out, "canonical {canonical}");
            let _ = writeln!(out, "tokens    {}", vocab.render(&ids).join(" "));
            let _ = writeln!(out, "size {} depth {}", canonical.size(), canonical.depth());
        }
        Command::Progress { formula, labels, alphabet } => {
            let ab = alphabet_for(cli, alphabet)?;
            let mut f = simplify(&parse(formula, &ab).map_err(HarnessError::Input)?);
            let _ = writeln!(out, "start\t{f}");
            for text in labels {
                let label = ab.parse_label(text).map_err(HarnessError::Input)?;
                f = progress(label, &f);
                let verdict = match settle(f.clone()) {
                    Settled::Satisfied => "satisfied",
                    Settled::Falsified => "falsified",
                    Settled::Pending(_) => "pending",
                };
                let _ = writeln!(out, "{}\t{f}\t{verdict}", ab.format_label(label));
                if f.is_constant() {
                    break;
                }
            }
        }
        Command::Closure { formula, alphabet } => {
            let ab = alphabet_for(cli, alphabet)?;
            let f = parse(formula, &ab).map_err(HarnessError::Input)?;
            let tasks = closure(&f, &ab).map_err(HarnessError::Input)?;
            let _ = writeln!(out, "members {}", tasks.len());
            for i in 0..tasks.len() {
                let _ = writeln!(out, "{i}\t{}", tasks.key(i));
            }
            let _ = writeln!(out, "transitions");
            let universe = label_universe(alphabet, &ab);
            for i in 0..tasks.len() {
                for &label in &universe {
                    let next = match tasks.step(i, label) {
                        TaskRef::Active(j) => j.to_string(),
                        terminal => tasks.describe(terminal).to_string(),
                    };
                    let _ = writeln!(out, "{i}\t{}\t{next}", ab.format_label(label));
                }
            }
        }
        Command::Pretrain => {
            let cfg = load_config(cli)?;
            let seed = cfg.seeds[0];
            let r = pretrain_run(&cfg, seed, out)?;
            let _ = writeln!(out, "checkpoint {}", r.checkpoint.display());
            let _ = writeln!(out, "episodes {} rolling_success {:.4}", r.episodes, r.final_rolling);
            if !r.converged {
                let _ = writeln!(out, "budget exhausted before the success threshold was reached");
                return Ok(Status::BudgetExhausted);
            }
            let _ = writeln!(out, "converged");
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            for run in train(&cfg, out)? {
                for s in &run.seeds {
                    let successes = s.metrics.iter().filter(|m| m.success()).count();
                    let _ = writeln!(
                        out,
                        "{} seed {}: {} episodes, {} successful",
                        run.dir.display(),
                        s.seed,
                        s.metrics.len(),
                        successes
                    );
                }
            }
        }
        Command::Eval { checkpoint } => {
            let cfg = load_config(cli)?;
            let seed = cfg.seeds[0];
            let summary = eval_run(&cfg, checkpoint, seed)?;
            print_summary(out, &summary);
            let path = eval_path(cli.out.as_deref(), &cfg, seed);
            write_eval_csv(&path, &summary)?;
            let _ = writeln!(out, "episodes written to {}", path.display());
        }
        Command::Attention { checkpoint, formula } => {
            let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("attention.tsv"));
            let report = attention_run(checkpoint, formula, &path)?;
            let _ = writeln!(out, "tokens {}", report.tokens.join(" "));
            for (l, h, token, w) in &report.top {
                let _ = writeln!(out, "layer {l} head {h}: top token {token} ({w:.4})");
            }
            let _ = writeln!(out, "layer 0 max/min token weight {:.4}", report.uniformity_ratio());
            let _ = writeln!(out, "dump written to {}", path.display());
        }
    }
    Ok(Status::Done)
}

fn eval_path(out: Option<&Path>, cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    out.map_or_else(|| cfg.out.clone(), Path::to_path_buf)
        .join(format!("eval-seed-{seed}.csv"))
}
