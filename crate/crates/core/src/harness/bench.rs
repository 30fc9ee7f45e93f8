use std::io::Write;
use std::time::Instant;

use super::config::ExperimentConfig;
use super::report::mean_sd;
use super::trial::make_policy;
use crate::baselines::PolicyKind;
use crate::gnn::PolicyParameters;
use crate::rl::Episode;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub policy: String,
    pub map_size: f64,
    pub mean_seconds: f64,
    pub sd_seconds: f64,
    pub decisions: usize,
}

pub const TIMING_HEADER: &str = "policy,map_size_m,mean_decision_time_s,sd_decision_time_s,decisions";

/// Mean wall time per decision for each policy and square map size, at the
/// configured landmark density. Each trial times its first
/// `eval.bench_decisions` decisions, after one untimed warm-up call.
/// Trials run sequentially so timings do not contend.
pub fn benchmark_decision_time(
    cfg: &ExperimentConfig,
    policies: &[PolicyKind],
    learned: Option<&PolicyParameters>,
    map_sizes: &[f64],
) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for kind in policies {
        let loaded;
        let learned = match (kind, learned) {
            (PolicyKind::Learned(path), None) => {
                loaded = PolicyParameters::load(path)?;
                Some(&loaded)
            }
            (_, l) => l,
        };
        for &size in map_sizes {
            let mut times = Vec::new();
            for &seed in cfg.eval.seeds.iter().take(cfg.eval.bench_trials) {
                let mut wc = cfg.world.clone();
                wc.width = size;
                wc.height = size;
                wc.seed = seed;
                let mut episode = Episode::new(&wc)?;
                let mut policy = make_policy(kind, learned, cfg.train.alpha, seed)?;
                let mut warmed = false;
                while !episode.is_done() && episode.decisions() < cfg.eval.bench_decisions {
                    if !warmed {
                        policy.decide(&episode)?;
                        warmed = true;
                    }
                    let started = Instant::now();
                    let choice = policy.decide(&episode)?;
                    times.push(started.elapsed().as_secs_f64());
                    episode.execute(choice)?;
                }
            }
            let (mean, sd) = mean_sd(&times);
            rows.push(TimingRow { policy: kind.name().to_string(), map_size: size, mean_seconds: mean, sd_seconds: sd, decisions: times.len() });
        }
    }
    Ok(rows)
}

pub fn write_timing<W: Write>(mut w: W, rows: &[TimingRow]) -> std::io::Result<()> {
    writeln!(w, "{TIMING_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.policy, r.map_size, r.mean_seconds, r.sd_seconds, r.decisions)?;
    }
    Ok(())
}
