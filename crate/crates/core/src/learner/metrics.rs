use std::io::{self, Write};

pub const METRICS_HEADER: &str = "episode,steps,return,performance,epsilon,wall_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub steps: usize,
    pub ret: i8,
    pub performance: f64,
    pub epsilon: f64,
    pub wall_ms: u64,
}

impl EpisodeMetrics {
    pub fn success(&self) -> bool {
        self.ret > 0
    }
}

/// Discrete performance of an episode: task return plus
/// `gamma^(steps / optimal_steps)`.
pub fn performance(ret: i8, steps: usize, optimal_steps: usize, gamma: f64) -> f64 {
    f64::from(ret) + gamma.powf(steps as f64 / optimal_steps.max(1) as f64)
}

/// Success rate over the trailing `window` episodes ending at each episode.
pub fn rolling_success(metrics: &[EpisodeMetrics], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(metrics.len());
    let mut hits = 0usize;
    for (i, m) in metrics.iter().enumerate() {
        hits += usize::from(m.success());
        if i >= window {
            hits -= usize::from(metrics[i - window].success());
        }
        out.push(hits as f64 / (i + 1).min(window) as f64);
    }
    out
}

pub fn write_metrics_csv<W: Write>(out: &mut W, metrics: &[EpisodeMetrics]) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{}",
            m.episode, m.steps, m.ret, m.performance, m.epsilon, m.wall_ms
        )?;
    }
    Ok(())
}

/// Greedy evaluation over several episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub episodes: Vec<EpisodeMetrics>,
    pub mean_performance: f64,
    pub median_performance: f64,
    pub success_rate: f64,
    pub mean_steps: f64,
}

impl EvalSummary {
    pub fn from_episodes(episodes: Vec<EpisodeMetrics>) -> Self {
        let n = episodes.len().max(1) as f64;
        let mut perf: Vec<f64> = episodes.iter().map(|m| m.performance).collect();
        perf.sort_by(f64::total_cmp);
        let median = match perf.len() {
            0 => 0.0,
            k if k % 2 == 1 => perf[k / 2],
            k => 0.5 * (perf[k / 2 - 1] + perf[k / 2]),
        };
        Self {
            mean_performance: perf.iter().sum::<f64>() / n,
            median_performance: median,
            success_rate: episodes.iter().filter(|m| m.success()).count() as f64 / n,
            mean_steps: episodes.iter().map(|m| m.steps as f64).sum::<f64>() / n,
            episodes,
        }
    }
}
