//! Experiment orchestration: configuration, trials and their metrics,
//! policy comparison, the decision-time benchmark, and CSV output.

mod bench;
mod config;
mod report;
mod trial;

use std::path::{Path, PathBuf};

pub use bench::{benchmark_decision_time, write_timing, TimingRow, TIMING_HEADER};
pub use config::{EvalConfig, ExperimentConfig};
pub use report::{
    aligned_series, compare_policies, emit_plot_data, mean_sd, paired_sign_test, parse_plot_csv, sign_test_p_value,
    write_summary, Indexing, Metric, PolicyReport, Report,
};
pub use trial::{make_policy, run_trial, TrialMetrics, TrialOptions, METRICS_HEADER};

use crate::baselines::PolicyKind;
use crate::exploration_graph::GraphOptions;
use crate::gnn::PolicyParameters;
use crate::Result;

/// Re-runs the trial of `seed` and writes `metrics.csv` plus one
/// `graph_<k>.txt` per decision into `out`.
pub fn replay(cfg: &ExperimentConfig, kind: &PolicyKind, learned: Option<&PolicyParameters>, seed: u64, out: &Path) -> Result<TrialMetrics> {
    let loaded;
    let learned = match (kind, learned) {
        (PolicyKind::Learned(path), None) => {
            loaded = PolicyParameters::load(path)?;
            Some(&loaded)
        }
        (_, l) => l,
    };
    let options = TrialOptions {
        max_decisions: cfg.eval.max_decisions,
        alpha: cfg.train.alpha,
        keep_graphs: true,
        graph_options: GraphOptions { max_nodes: cfg.eval.max_graph_nodes },
        ..TrialOptions::default()
    };
    let mut policy = make_policy(kind, learned, cfg.train.alpha, seed)?;
    let metrics = run_trial(&cfg.world, &mut policy, kind.name(), seed, &options)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(metrics_path(out, kind.name(), seed), metrics.csv_string())?;
    for (k, g) in metrics.graphs.iter().enumerate() {
        std::fs::write(out.join(format!("graph_{k:04}.txt")), g)?;
    }
    Ok(metrics)
}

/// `<dir>/<policy>_seed<seed>_metrics.csv`
pub fn metrics_path(dir: &Path, policy: &str, seed: u64) -> PathBuf {
    dir.join(format!("{policy}_seed{seed}_metrics.csv"))
}
