use std::io::Write;
use std::time::Instant;

use crate::baselines::{Policy, PolicyKind};
use crate::exploration_graph::GraphOptions;
use crate::gnn::PolicyParameters;
use crate::rl::{normalized_reward, Episode, StepRecord};
use crate::rng::{self, Stream};
use crate::world::WorldConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOptions {
    pub max_decisions: usize,
    /// Compute the normalized reward of every decision (costs one full
    /// candidate evaluation per decision, outside the timed region).
    pub record_rewards: bool,
    pub alpha: f64,
    pub graph_options: GraphOptions,
    /// Keep the text form of every decision's exploration graph.
    pub keep_graphs: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self { max_decisions: 400, record_rewards: false, alpha: 1.0, graph_options: GraphOptions::default(), keep_graphs: false }
    }
}

/// Everything measured in one exploration trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub policy: String,
    pub seed: u64,
    /// One record per motion step, starting with the initial state.
    pub records: Vec<StepRecord>,
    pub decisions: usize,
    pub motion_steps: usize,
    pub distance: f64,
    pub coverage: f64,
    pub reached_target: bool,
    pub slam_failures: usize,
    pub rewards: Vec<f64>,
    pub max_graph_nodes: usize,
    /// Wall time of each policy call, in seconds.
    pub decision_times: Vec<f64>,
    pub graphs: Vec<String>,
}

pub const METRICS_HEADER: &str =
    "motion_step,decision,avg_landmark_uncertainty,max_trajectory_uncertainty,map_entropy,coverage,distance";

impl TrialMetrics {
    /// SLAM failed to converge at least once; excluded from aggregates.
    pub fn flagged(&self) -> bool {
        self.slam_failures > 0
    }

    /// Mean over the steps where at least one landmark was mapped.
    pub fn mean_avg_landmark_uncertainty(&self) -> f64 {
        mean(self.records.iter().map(|r| r.avg_landmark_uncertainty).filter(|v| !v.is_nan()))
    }

    pub fn mean_max_trajectory_uncertainty(&self) -> f64 {
        mean(self.records.iter().map(|r| r.max_trajectory_uncertainty))
    }

    /// Entropy removed per motion step, in bits.
    pub fn entropy_reduction_rate(&self) -> f64 {
        match (self.records.first(), self.records.last()) {
            (Some(a), Some(b)) if self.motion_steps > 0 => (a.map_entropy - b.map_entropy) / self.motion_steps as f64,
            _ => 0.0,
        }
    }

    pub fn mean_reward(&self) -> f64 {
        mean(self.rewards.iter().copied())
    }

    pub fn mean_decision_time(&self) -> f64 {
        mean(self.decision_times.iter().copied())
    }

    /// The per-step series; wall times are excluded so reruns compare equal
    /// byte for byte.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.motion_step, r.decision, r.avg_landmark_uncertainty, r.max_trajectory_uncertainty, r.map_entropy, r.coverage, r.distance
            )?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ASCII output")
    }
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Builds the policy for one trial; the random policy draws from the
/// trial's policy stream.
pub fn make_policy(kind: &PolicyKind, learned: Option<&PolicyParameters>, alpha: f64, seed: u64) -> Result<Policy> {
    match (kind, learned) {
        (PolicyKind::Learned(_), Some(p)) => Ok(Policy::learned(p.clone())),
        _ => Policy::new(kind, alpha, rng::stream(seed, Stream::Policy)),
    }
}

/// Runs one episode in the world of `seed` until the coverage target, no
/// frontier left, or the decision cap.
pub fn run_trial(world: &WorldConfig, policy: &mut Policy, name: &str, seed: u64, options: &TrialOptions) -> Result<TrialMetrics> {
    let mut wc = world.clone();
    wc.seed = seed;
    let mut episode = Episode::new(&wc)?;
    episode.graph_options = options.graph_options;
    episode.enable_records();
    let mut rewards = Vec::new();
    let mut times = Vec::new();
    let mut graphs = Vec::new();
    let mut max_nodes = 0;
    while !episode.is_done() && episode.decisions() < options.max_decisions {
        if options.keep_graphs || matches!(policy, Policy::Learned(_)) {
            if let Some(g) = episode.graph() {
                max_nodes = max_nodes.max(g.num_nodes());
                if options.keep_graphs {
                    graphs.push(g.to_text());
                }
            }
        }
        let started = Instant::now();
        let choice = policy.decide(&episode)?;
        times.push(started.elapsed().as_secs_f64());
        if choice >= episode.frontiers().len() {
            return Err(Error::Contract(format!("policy {name} chose frontier {choice} of {}", episode.frontiers().len())));
        }
        if options.record_rewards {
            let raw = episode.raw_rewards(options.alpha);
            rewards.push(normalized_reward(&raw, choice, episode.nearest_frontier()?)?);
        }
        episode.execute(choice)?;
    }
    Ok(TrialMetrics {
        policy: name.to_string(),
        seed,
        records: episode.records().to_vec(),
        decisions: episode.decisions(),
        motion_steps: episode.motion_steps(),
        distance: episode.distance(),
        coverage: episode.coverage(),
        reached_target: episode.coverage() >= wc.coverage_target,
        slam_failures: episode.slam_failures(),
        rewards,
        max_graph_nodes: max_nodes,
        decision_times: times,
        graphs,
    })
}
