//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints its verdict line even when all of them pass.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use t2tl::encoder::{
    dump_row_sum_error, gradient_check, read_attention_dump, CheckInput, EncoderConfig, EncoderParams, TokenVocab, PAD,
};
use t2tl::envs::{Environment, GridEnv};
use t2tl::learner::{
    evaluate_policy, reachable_product, shortest_steps, train_tabular, value_iteration, TabularLearner, TrainConfig,
};
use t2tl::ltl::{closure, evaluate, parse, progress, simplify, Alphabet, Formula, LabelSet};
use t2tl::tlmdp::{nonmarkov_reward, TlMdp};
use t2tl_harness::config::ExperimentConfig;
use t2tl_harness::run::{attention_run, eval_run, pretrain_run, train};

const DELIVER: &str = "F (Coffee & F Office) & G !Decoration";
const GAMMA: f64 = 0.9;

// criterion 1
const MIN_TRIPLES: usize = 10_000;
const PROGRESSION_LIMIT: Duration = Duration::from_secs(30);
// criterion 2
const EPISODES_PER_ENV: usize = 1000;
// criterion 4
const GRAD_EPS: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-3;
const ROW_SUM_TOL: f64 = 1e-6;
const NUMERICS_LIMIT: Duration = Duration::from_secs(60);
// criterion 5
const VALUE_TOL: f64 = 1e-6;
const TABULAR_LIMIT: Duration = Duration::from_secs(300);
// criterion 6
const SUCCESS_LEVEL: usize = 9;
const SUCCESS_WINDOW: usize = 10;
const BENEFIT_BUDGET: usize = 2000;
// criterion 7
const PRETRAIN_THRESHOLD: f64 = 0.95;
const PRETRAIN_BUDGET: usize = 50_000;
const DOWNSTREAM_SUCCESS: f64 = 0.9;
const PRETRAIN_LIMIT: Duration = Duration::from_secs(15 * 60);
// criterion 9
const UNIFORMITY_RATIO: f64 = 2.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap_or_else(|e| panic!("acceptance config rejected: {e}"))
}

fn random_formula(props: &[Formula], depth: u32, rng: &mut ChaCha8Rng) -> Formula {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..8) {
            0 => Formula::True,
            1 => Formula::False,
            _ => props[rng.gen_range(0..props.len())].clone(),
        };
    }
    let op = rng.gen_range(0..7);
    let mut sub = || random_formula(props, depth - 1, rng);
    match op {
        0 => Formula::not(sub()),
        1 => Formula::next(sub()),
        2 => Formula::eventually(sub()),
        3 => Formula::always(sub()),
        4 => Formula::and(sub(), sub()),
        5 => Formula::or(sub(), sub()),
        _ => Formula::until(sub(), sub()),
    }
}

fn progression_soundness() -> Verdict {
    let start = Instant::now();
    let ab = Alphabet::new(["a", "b", "c", "d"]).unwrap();
    let props: Vec<Formula> = ab.props().iter().map(Formula::prop).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut triples, mut failures) = (0usize, 0usize);
    while triples < 2 * MIN_TRIPLES {
        let f = random_formula(&props, 4, &mut rng);
        let len = rng.gen_range(2..=8);
        let word: Vec<LabelSet> = (0..len).map(|_| LabelSet::from_bits(rng.gen_range(0..16))).collect();
        for i in 0..len - 1 {
            let now = evaluate(&word, i, &f).unwrap();
            let later = evaluate(&word, i + 1, &progress(word[i], &f)).unwrap();
            triples += 1;
            if now != later {
                failures += 1;
            }
        }
    }
    let t = start.elapsed();
    verdict(
        triples >= MIN_TRIPLES && failures == 0 && t < PROGRESSION_LIMIT,
        format!("{triples} triples, {failures} failures, {:.2} s", t.as_secs_f64()),
    )
}

fn reward_mismatches<E: Environment>(env: E, formula: &str, episodes: usize) -> (usize, usize) {
    let ab = env.alphabet().clone();
    let f = parse(formula, &ab).unwrap();
    let tasks = Arc::new(closure(&f, &ab).unwrap());
    let mut mdp = TlMdp::new(env, tasks.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut mismatches, mut decided) = (0, 0);
    for ep in 0..episodes {
        let state = mdp.reset(ep as u64);
        let mut trajectory = vec![state.env];
        let mut terminal_reward = state.task.reward();
        let mut done = state.is_terminal();
        while !done {
            let t = mdp.step(rng.gen_range(0..mdp.env().num_actions())).unwrap();
            trajectory.push(t.next.env);
            done = t.done;
            if !done && t.reward != 0 {
                mismatches += 1;
            }
            terminal_reward = t.reward;
        }
        let universe = mdp.env().label_universe();
        if nonmarkov_reward(&trajectory, tasks.root(), &universe) != terminal_reward {
            mismatches += 1;
        }
        if terminal_reward != 0 {
            decided += 1;
        }
    }
    (mismatches, decided)
}

fn reward_equivalence() -> Verdict {
    let (office_bad, office_decided) = reward_mismatches(GridEnv::office(5).unwrap(), DELIVER, EPISODES_PER_ENV);
    let (craft_bad, craft_decided) = reward_mismatches(
        GridEnv::minicraft(5).unwrap(),
        "F (Wood & F Workshop) & G !Trap & G !Marsh",
        EPISODES_PER_ENV,
    );
    verdict(
        office_bad == 0 && craft_bad == 0,
        format!(
            "office {office_bad} mismatches ({office_decided}/{EPISODES_PER_ENV} decided), \
             minicraft {craft_bad} mismatches ({craft_decided}/{EPISODES_PER_ENV} decided)"
        ),
    )
}

fn worked_progression() -> Verdict {
    let ab = Alphabet::new(["Black_Zone", "White_Zone", "Red_Zone", "Yellow_Zone"]).unwrap();
    let safe = parse("F (Black_Zone & F White_Zone) & G !Red_Zone & G !Yellow_Zone", &ab).unwrap();
    let expected = simplify(&parse("F White_Zone & G !Red_Zone & G !Yellow_Zone", &ab).unwrap());
    let got = progress(ab.label(["Black_Zone"]).unwrap(), &simplify(&safe));
    verdict(got == expected, format!("{got}"))
}

fn transformer_numerics() -> Verdict {
    let start = Instant::now();
    let ab = Alphabet::new(["a", "b", "c", "d"]).unwrap();
    let vocab = TokenVocab::new(&ab);
    let config = EncoderConfig {
        layers: 1,
        heads: 2,
        d_model: 8,
        d_ff: 16,
        d_out: 8,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = EncoderParams::for_tokens(config, vocab.len(), &mut rng).unwrap();
    let mut ids = vocab.encode(&parse("!c U (a & (!d U b))", &ab).unwrap()).unwrap();
    ids.extend([PAD, PAD]);
    let upstream: Vec<f64> = (0..config.d_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let checks = gradient_check(&params, CheckInput::Tokens(&ids), &upstream, GRAD_EPS).unwrap();
    let worst = checks.iter().map(|c| c.max_relative_error).fold(0.0, f64::max);

    let enc = params.forward_tokens(&ids).unwrap();
    let mut row_err = 0.0f64;
    let mut pad_mass = 0.0f64;
    for head in enc.attention.layers.iter().flatten() {
        for q in 0..head.rows {
            let row = head.row(q);
            row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
            for (k, &w) in row.iter().enumerate() {
                if ids[k] == PAD {
                    pad_mass = pad_mass.max(w.abs());
                }
            }
        }
    }
    let t = start.elapsed();
    verdict(
        worst <= GRAD_TOL && row_err <= ROW_SUM_TOL && pad_mass == 0.0 && t < NUMERICS_LIMIT,
        format!(
            "{} tensors, worst relative error {worst:.2e}, row-sum error {row_err:.1e}, PAD weight {pad_mass}, {:.2} s",
            checks.len(),
            t.as_secs_f64()
        ),
    )
}

fn tabular_oracle() -> Verdict {
    let start = Instant::now();
    let env = GridEnv::office(5).unwrap();
    let ab = env.alphabet().clone();
    let tasks = Arc::new(closure(&parse(DELIVER, &ab).unwrap(), &ab).unwrap());
    let oracle = value_iteration(&env, &tasks, GAMMA, 1e-15, 100_000);
    let start_state = TlMdp::new(env.clone(), tasks.clone()).reset(0);
    let reachable = reachable_product(&env, &tasks, start_state);
    let bfs = shortest_steps(&env, &tasks, start_state).unwrap();
    let mut worst = 0.0f64;
    let mut steps = Vec::new();
    for seed in 0..5 {
        let cfg = TrainConfig {
            lr: 1.0,
            target_sync: 1,
            episodes: 20_000,
            eps_end: 0.5,
            eps_decay_fraction: 1.0,
            simultaneous: true,
            seed,
            ..TrainConfig::default()
        };
        let mut out = train_tabular(env.clone(), tasks.clone(), &cfg).unwrap();
        worst = worst.max(out.q.max_diff(&oracle.q, &reachable));
        let mut mdp = TlMdp::new(env.clone(), tasks.clone());
        let eval = evaluate_policy(&mut out.q, &mut mdp, 1, 0, GAMMA).unwrap();
        steps.push((eval.success_rate, eval.episodes[0].steps));
    }
    let t = start.elapsed();
    let optimal = steps.iter().all(|&(s, n)| s == 1.0 && n == bfs);
    verdict(
        worst <= VALUE_TOL && optimal && t < TABULAR_LIMIT,
        format!(
            "max |Q - Q*| {worst:.1e} over {} reachable states, greedy steps {:?} vs shortest {bfs}, {:.1} s",
            reachable.len(),
            steps.iter().map(|s| s.1).collect::<Vec<_>>(),
            t.as_secs_f64()
        ),
    )
}

/// First episode count after which the greedy policy succeeded in
/// `SUCCESS_LEVEL` of the last `SUCCESS_WINDOW` evaluations; `budget + 1`
/// when that never happens.
fn episodes_to_success(simultaneous: bool, seed: u64, budget: usize) -> usize {
    let env = GridEnv::office(5).unwrap();
    let ab = env.alphabet().clone();
    let tasks = Arc::new(closure(&parse(DELIVER, &ab).unwrap(), &ab).unwrap());
    let cfg = TrainConfig {
        lr: 1.0,
        target_sync: 1,
        episodes: budget,
        eps_decay_fraction: 0.9,
        simultaneous,
        seed,
        ..TrainConfig::default()
    };
    let mut learner = TabularLearner::new(env.clone(), tasks.clone(), &cfg).unwrap();
    let mut greedy = TlMdp::new(env, tasks);
    let mut history = Vec::with_capacity(budget);
    for ep in 0..budget {
        learner.run_episode(ep).unwrap();
        let s = evaluate_policy(&mut learner.q, &mut greedy, 1, 0, GAMMA).unwrap();
        history.push(s.success_rate == 1.0);
        let n = history.len();
        if n >= SUCCESS_WINDOW && history[n - SUCCESS_WINDOW..].iter().filter(|&&x| x).count() >= SUCCESS_LEVEL {
            return ep + 1;
        }
    }
    budget + 1
}

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

fn simultaneous_benefit() -> Verdict {
    let sim: Vec<usize> = (0..5).map(|s| episodes_to_success(true, s, BENEFIT_BUDGET)).collect();
    let single: Vec<usize> = (0..5).map(|s| episodes_to_success(false, s, BENEFIT_BUDGET)).collect();
    let (ms, m1) = (median(sim.clone()), median(single.clone()));
    verdict(
        ms < m1,
        format!(
            "median episodes to 0.9: simultaneous {ms} {sim:?}, single-task {m1} {single:?} (budget {BENEFIT_BUDGET}, {} = not reached)",
            BENEFIT_BUDGET + 1
        ),
    )
}

fn pretraining(dir: &Path) -> (Verdict, Option<PathBuf>) {
    let start = Instant::now();
    let pre_out = dir.join("pretrain");
    let pre = config(&format!(
        "env = office\nformula = {DELIVER}\nseeds = 0\nout = {}\n\
         pretrain.alphabet = Coffee, Office, Email, Decoration\n\
         pretrain.budget = {PRETRAIN_BUDGET}\npretrain.threshold = {PRETRAIN_THRESHOLD}\n",
        pre_out.display()
    ));
    let r = pretrain_run(&pre, 0, &mut std::io::sink()).unwrap();
    let pre_time = start.elapsed();
    if !r.converged {
        return (
            verdict(false, format!("pre-training stalled at {:.3} after {} episodes", r.final_rolling, r.episodes)),
            None,
        );
    }

    let run_out = dir.join("downstream");
    let down = config(&format!(
        "env = office\nformula = {DELIVER}\nmode = neural\nseeds = 1\nout = {}\npretrained = {}\n\
         train.episodes = 600\ntrain.optimizer = adam\ntrain.lr = 0.001\n",
        run_out.display(),
        r.checkpoint.display()
    ));
    train(&down, &mut std::io::sink()).unwrap();
    let checkpoint = run_out.join("seed-1/checkpoint.t2tl");
    let eval = eval_run(&down, &checkpoint, 1).unwrap();
    let t = start.elapsed();
    (
        verdict(
            r.final_rolling >= PRETRAIN_THRESHOLD && eval.success_rate >= DOWNSTREAM_SUCCESS && t < PRETRAIN_LIMIT,
            format!(
                "pre-training reached {:.3} after {} episodes ({:.0} s), downstream greedy success {:.2} \
                 over {} episodes, mean steps {:.1}, total {:.0} s",
                r.final_rolling,
                r.episodes,
                pre_time.as_secs_f64(),
                eval.success_rate,
                eval.episodes.len(),
                eval.mean_steps,
                t.as_secs_f64()
            ),
        ),
        Some(checkpoint),
    )
}

fn metrics_rows(path: &Path) -> Option<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    if lines.next()? != t2tl::learner::METRICS_HEADER {
        return None;
    }
    lines
        .map(|l| l.split(',').map(|x| x.parse::<f64>().ok().filter(|v| v.is_finite())).collect())
        .collect()
}

fn dimension_sweep(dir: &Path) -> Verdict {
    let episodes = 40;
    let cfg = config(&format!(
        "env = office\nformula = {DELIVER}\nmode = neural\nseeds = 0\nout = {}\n\
         sweep.d_repr = 4, 8, 16, 32\ntrain.episodes = {episodes}\ntrain.step_cap = 50\n\
         train.optimizer = adam\ntrain.lr = 0.001\n",
        dir.join("sweep").display()
    ));
    let runs = train(&cfg, &mut std::io::sink()).unwrap();
    let mut notes = Vec::new();
    let mut complete = 0;
    for d in [4, 8, 16, 32] {
        let path = dir.join(format!("sweep/d_repr-{d}/seed-0/metrics.csv"));
        match metrics_rows(&path) {
            Some(rows) if rows.len() == episodes && rows.iter().enumerate().all(|(i, r)| r[0] == i as f64) => {
                complete += 1;
                let mean = rows.iter().map(|r| r[3]).sum::<f64>() / rows.len() as f64;
                notes.push(format!("d_repr {d}: mean performance {mean:.3}"));
            }
            _ => notes.push(format!("d_repr {d}: incomplete")),
        }
    }
    verdict(
        runs.len() == 4 && complete == 4,
        format!("{complete}/4 complete series; {}", notes.join(", ")),
    )
}

fn attention_dumps(dir: &Path, trained: Option<&Path>) -> Verdict {
    let fresh_out = dir.join("fresh");
    let cfg = config(&format!(
        "env = minicraft\nformula = F (Wood & F Workshop) & G !Trap & G !Marsh\nmode = neural\nseeds = 0\n\
         out = {}\ntrain.episodes = 0\n",
        fresh_out.display()
    ));
    train(&cfg, &mut std::io::sink()).unwrap();
    let fresh = attention_run(
        &fresh_out.join("seed-0/checkpoint.t2tl"),
        "F (Wood & F Workshop) & G !Trap & G !Marsh",
        &dir.join("fresh-attention.tsv"),
    )
    .unwrap();
    let ratio = fresh.uniformity_ratio();

    let mut dumps = vec![dir.join("fresh-attention.tsv")];
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "tsv") && !dumps.contains(&p) {
                dumps.push(p);
            }
        }
    }
    let worst_row = dumps
        .iter()
        .map(|p| {
            let records = read_attention_dump(std::io::BufReader::new(fs::File::open(p).unwrap())).unwrap();
            dump_row_sum_error(&records)
        })
        .fold(0.0, f64::max);

    let mut detail = format!(
        "fresh max/min token weight {ratio:.3}, {} dumps with worst row-sum error {worst_row:.1e}",
        dumps.len()
    );
    if let Some(ck) = trained {
        if let Ok(r) = attention_run(ck, DELIVER, &dir.join("trained-attention.tsv")) {
            let heads: Vec<String> = r.top.iter().filter(|t| t.0 == 0).map(|t| t.2.clone()).collect();
            detail.push_str(&format!("; trained layer-0 head focus {heads:?}"));
        }
    }
    verdict(ratio < UNIFORMITY_RATIO && worst_row <= ROW_SUM_TOL, detail)
}

fn cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_t2tl"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism(dir: &Path) -> Verdict {
    let root = dir.join("determinism");
    fs::create_dir_all(&root).unwrap();
    let configs = [
        (
            "tabular",
            format!("env = office\nformula = {DELIVER}\nmode = tabular\nseeds = 3\ntrain.episodes = 200\ntrain.lr = 1.0\n"),
        ),
        (
            "neural",
            format!(
                "env = office\nformula = {DELIVER}\nmode = neural\nseeds = 3\ntrain.episodes = 30\n\
                 train.step_cap = 40\ntrain.optimizer = adam\ncontext.enabled = true\n"
            ),
        ),
    ];
    let mut compared = 0;
    let mut differing = Vec::new();
    for (name, text) in &configs {
        let cfg = root.join(format!("{name}.cfg"));
        fs::write(&cfg, text).unwrap();
        let mut files = Vec::new();
        for rep in ["a", "b"] {
            let out = format!("{name}-{rep}");
            if !cli(&root, &["--config", cfg.to_str().unwrap(), "--out", &out, "train"]) {
                return verdict(false, format!("{name} run {rep} failed"));
            }
            files.push(fs::read(root.join(&out).join("seed-3/metrics.csv")).unwrap());
        }
        compared += 1;
        if files[0] != files[1] {
            differing.push(name.to_string());
        }
    }
    verdict(
        differing.is_empty(),
        format!("{compared} configurations run twice, differing: {differing:?}"),
    )
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().unwrap();
    let dir = scratch.path();
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |n: u32, name: &'static str, v: Verdict| {
        println!("criterion {n:>2} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };
    record(1, "progression soundness", progression_soundness());
    record(2, "reward equivalence", reward_equivalence());
    record(3, "worked progression", worked_progression());
    record(4, "transformer numerics", transformer_numerics());
    record(5, "tabular oracle equivalence", tabular_oracle());
    record(6, "simultaneous-learning benefit", simultaneous_benefit());
    let (v, trained) = pretraining(dir);
    record(7, "pre-training and downstream transfer", v);
    record(8, "dimension sweep", dimension_sweep(dir));
    record(9, "attention dumps", attention_dumps(dir, trained.as_deref()));
    record(10, "end-to-end determinism", determinism(dir));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
