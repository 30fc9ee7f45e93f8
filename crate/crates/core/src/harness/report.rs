use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::trial::{make_policy, run_trial, TrialMetrics, TrialOptions};
use crate::baselines::PolicyKind;
use crate::gnn::PolicyParameters;
use crate::rl::StepRecord;
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReport {
    pub policy: String,
    /// Trials in seed order, flagged ones removed.
    pub trials: Vec<TrialMetrics>,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub policies: Vec<PolicyReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Indexing {
    MotionStep,
    Decision,
}

impl Indexing {
    fn tag(self) -> &'static str {
        match self {
            Indexing::MotionStep => "motion",
            Indexing::Decision => "decision",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    AvgLandmarkUncertainty,
    MaxTrajectoryUncertainty,
    MapEntropy,
}

impl Metric {
    pub fn of(self, r: &StepRecord) -> f64 {
        match self {
            Metric::AvgLandmarkUncertainty => r.avg_landmark_uncertainty,
            Metric::MaxTrajectoryUncertainty => r.max_trajectory_uncertainty,
            Metric::MapEntropy => r.map_entropy,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Metric::AvgLandmarkUncertainty => "fig5a_landmark_uncertainty.csv",
            Metric::MaxTrajectoryUncertainty => "fig5b_trajectory_uncertainty.csv",
            Metric::MapEntropy => "fig5c_map_entropy.csv",
        }
    }

    pub const ALL: [Metric; 3] = [Metric::AvgLandmarkUncertainty, Metric::MaxTrajectoryUncertainty, Metric::MapEntropy];
}

/// Values of one trial at each index; the last value is held once the trial
/// has ended.
fn trial_series(t: &TrialMetrics, metric: Metric, indexing: Indexing) -> Vec<f64> {
    match indexing {
        Indexing::MotionStep => t.records.iter().map(|r| metric.of(r)).collect(),
        Indexing::Decision => {
            // Entry k holds the state after k completed decisions.
            let mut out = Vec::new();
            for r in &t.records {
                let k = if r.motion_step == 0 { 0 } else { r.decision + 1 };
                if k + 1 > out.len() {
                    out.resize(k + 1, f64::NAN);
                }
                out[k] = metric.of(r);
            }
            for i in 1..out.len() {
                if out[i].is_nan() && !out[i - 1].is_nan() {
                    out[i] = out[i - 1];
                }
            }
            out
        }
    }
}

/// Mean and sample standard deviation across trials at every index,
/// ignoring NaN entries.
pub fn aligned_series(trials: &[TrialMetrics], metric: Metric, indexing: Indexing) -> Vec<(f64, f64)> {
    let series: Vec<Vec<f64>> = trials.iter().map(|t| trial_series(t, metric, indexing)).collect();
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let vals: Vec<f64> = series
                .iter()
                .filter_map(|s| s.get(i).or(s.last()).copied())
                .filter(|v| !v.is_nan())
                .collect();
            mean_sd(&vals)
        })
        .collect()
}

pub fn mean_sd(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (m, 0.0);
    }
    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// One-sided sign test: probability of at least `wins` successes among
/// `trials` fair coin flips.
pub fn sign_test_p_value(wins: usize, trials: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=trials {
        p += binomial(trials, k) * 0.5f64.powi(trials as i32);
    }
    p
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Paired sign test over seeds: counts pairs where `a` is strictly better
/// (`better(a, b)`), drops ties, returns `(wins, pairs, p)`.
pub fn paired_sign_test(a: &[f64], b: &[f64], better: impl Fn(f64, f64) -> bool) -> (usize, usize, f64) {
    let mut wins = 0;
    let mut pairs = 0;
    for (&x, &y) in a.iter().zip(b) {
        if x == y || x.is_nan() || y.is_nan() {
            continue;
        }
        pairs += 1;
        if better(x, y) {
            wins += 1;
        }
    }
    (wins, pairs, sign_test_p_value(wins, pairs))
}

/// Runs every policy on every configured trial seed (trials in parallel).
pub fn compare_policies(cfg: &ExperimentConfig, policies: &[PolicyKind], learned: Option<&PolicyParameters>) -> Result<Report> {
    if policies.is_empty() {
        return Err(Error::Config("at least one policy is required".into()));
    }
    let options = TrialOptions {
        max_decisions: cfg.eval.max_decisions,
        alpha: cfg.train.alpha,
        graph_options: crate::exploration_graph::GraphOptions { max_nodes: cfg.eval.max_graph_nodes },
        ..TrialOptions::default()
    };
    let mut report = Report::default();
    for kind in policies {
        let loaded;
        let learned = match (kind, learned) {
            (PolicyKind::Learned(path), None) => {
                loaded = PolicyParameters::load(path)?;
                Some(&loaded)
            }
            (_, l) => l,
        };
        let seeds = cfg.trial_seeds();
        let results = par::map(seeds, |&seed| -> Result<TrialMetrics> {
            let mut policy = make_policy(kind, learned, cfg.train.alpha, seed)?;
            run_trial(&cfg.world, &mut policy, kind.name(), seed, &options)
        });
        let mut trials = Vec::new();
        let mut excluded = 0;
        for r in results {
            let t = r?;
            if t.flagged() {
                excluded += 1;
            } else {
                trials.push(t);
            }
        }
        trials.sort_by_key(|t| t.seed);
        report.policies.push(PolicyReport { policy: kind.name().to_string(), trials, excluded });
    }
    Ok(report)
}

/// Writes the three per-step figure tables. Each has the header
/// `indexing,step,<policy>_mean,<policy>_sd,...` and one row per index for
/// both motion-step and decision indexing.
pub fn emit_plot_data(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for metric in Metric::ALL {
        let path = dir.join(metric.file_name());
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        write!(w, "indexing,step")?;
        for p in &report.policies {
            write!(w, ",{0}_mean,{0}_sd", p.policy)?;
        }
        writeln!(w)?;
        for indexing in [Indexing::MotionStep, Indexing::Decision] {
            let columns: Vec<Vec<(f64, f64)>> =
                report.policies.iter().map(|p| aligned_series(&p.trials, metric, indexing)).collect();
            let len = columns.iter().map(Vec::len).max().unwrap_or(0);
            for i in 0..len {
                write!(w, "{},{i}", indexing.tag())?;
                for c in &columns {
                    let (m, s) = c.get(i).or(c.last()).copied().unwrap_or((f64::NAN, f64::NAN));
                    write!(w, ",{m},{s}")?;
                }
                writeln!(w)?;
            }
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Summary table: one row per policy with per-trial means.
pub fn write_summary<W: Write>(mut w: W, report: &Report) -> std::io::Result<()> {
    writeln!(w, "policy,trials,excluded,avg_landmark_uncertainty,max_trajectory_uncertainty,entropy_reduction_rate,decisions,distance,coverage")?;
    for p in &report.policies {
        let col = |f: &dyn Fn(&TrialMetrics) -> f64| mean_sd(&p.trials.iter().map(f).collect::<Vec<_>>()).0;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            p.policy,
            p.trials.len(),
            p.excluded,
            col(&|t| t.mean_avg_landmark_uncertainty()),
            col(&|t| t.mean_max_trajectory_uncertainty()),
            col(&|t| t.entropy_reduction_rate()),
            col(&|t| t.decisions as f64),
            col(&|t| t.distance),
            col(&|t| t.coverage),
        )?;
    }
    Ok(())
}

/// Parses a figure table back into `(indexing, step, values)` rows.
pub fn parse_plot_csv(text: &str) -> Result<(Vec<String>, Vec<(String, usize, Vec<f64>)>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let err = |m: &str| Error::Parse { line: i + 2, msg: m.to_string() };
        let indexing = fields.next().ok_or_else(|| err("missing indexing"))?.to_string();
        let step = fields.next().ok_or_else(|| err("missing step"))?.parse().map_err(|_| err("bad step"))?;
        let vals = fields.map(|f| f.parse::<f64>().map_err(|_| err("bad value"))).collect::<Result<Vec<_>>>()?;
        rows.push((indexing, step, vals));
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_values() {
        assert!((sign_test_p_value(9, 10) - 11.0 / 1024.0).abs() < 1e-15);
        assert!((sign_test_p_value(8, 10) - 56.0 / 1024.0).abs() < 1e-15);
        assert_eq!(sign_test_p_value(0, 5), 1.0);
    }

    #[test]
    fn empty_report_has_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(&Report::default(), dir.path()).unwrap();
        for f in files {
            assert_eq!(std::fs::read_to_string(f).unwrap(), "indexing,step\n");
        }
    }
}
