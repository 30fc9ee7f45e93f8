use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use explore_core::baselines::PolicyKind;
use explore_core::gnn::PolicyParameters;
use explore_core::harness::{
    benchmark_decision_time, compare_policies, emit_plot_data, metrics_path, paired_sign_test, replay,
    write_summary, write_timing, ExperimentConfig,
};
use explore_core::rl::{train, write_train_log};
use explore_core::{Error, Result};

#[derive(Parser)]
#[command(name = "explore", about = "Graph-based RL exploration with active SLAM: training, evaluation and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Overrides the seed (training seed, or the single trial seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy; writes policy.ckpt and train_log.csv.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run trials for one policy; writes per-trial metric CSVs and summary.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// nearest | random | em | learned
        #[arg(long, default_value = "nearest")]
        policy: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run every configured policy on the same seeds; writes figure tables.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Time decisions across map sizes; writes fig4_decision_time.csv.
    BenchTime {
        #[command(flatten)]
        common: Common,
        /// Comma-separated policies; defaults to the configured ones.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Re-run one trial from its seed and dump its graphs and metrics.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "nearest")]
        policy: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn policy_list(names: &str, checkpoint: Option<&Path>) -> Result<Vec<PolicyKind>> {
    names.split(',').map(|p| PolicyKind::parse(p.trim(), checkpoint)).collect()
}

/// Resolves `learned` entries without a path to the given checkpoint.
fn with_checkpoint(policies: &[PolicyKind], checkpoint: Option<&Path>) -> Result<Vec<PolicyKind>> {
    policies
        .iter()
        .map(|p| match p {
            PolicyKind::Learned(path) if path.as_os_str().is_empty() => PolicyKind::parse("learned", checkpoint),
            other => Ok(other.clone()),
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            std::fs::create_dir_all(&common.out)?;
            if cfg.train.checkpoint_dir.is_none() {
                cfg.train.checkpoint_dir = Some(common.out.join("checkpoints"));
            }
            let outcome = train(&cfg.train, &cfg.world)?;
            outcome.policy.save(&common.out.join("policy.ckpt"))?;
            if let Some(v) = &outcome.value {
                v.save(&common.out.join("value.ckpt"))?;
            }
            write_train_log(create(&common.out.join("train_log.csv"))?, &outcome.log)?;
            println!("trained {} decisions over {} episodes -> {}", outcome.steps, outcome.log.len(), common.out.join("policy.ckpt").display());
        }
        Command::Evaluate { common, policy, checkpoint } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.eval.seeds = vec![s];
                cfg.eval.trials = 1;
            }
            let kind = PolicyKind::parse(&policy, checkpoint.as_deref())?;
            let report = compare_policies(&cfg, &[kind], None)?;
            std::fs::create_dir_all(&common.out)?;
            for t in &report.policies[0].trials {
                std::fs::write(metrics_path(&common.out, &t.policy, t.seed), t.csv_string())?;
            }
            write_summary(create(&common.out.join("summary.csv"))?, &report)?;
            write_summary(std::io::stdout().lock(), &report)?;
        }
        Command::Compare { common, checkpoint } => {
            let cfg = load_config(&common)?;
            let policies = with_checkpoint(&cfg.eval.policies, checkpoint.as_deref().or(cfg.eval.checkpoint.as_deref()))?;
            if policies.len() < 2 {
                return Err(Error::Config("compare needs at least two policies in eval.policies".into()));
            }
            let report = compare_policies(&cfg, &policies, None)?;
            emit_plot_data(&report, &common.out)?;
            write_summary(create(&common.out.join("summary.csv"))?, &report)?;
            write_summary(std::io::stdout().lock(), &report)?;
            let find = |name: &str| report.policies.iter().find(|p| p.policy == name);
            if let (Some(em), Some(near)) = (find("em"), find("nearest")) {
                let a: Vec<f64> = em.trials.iter().map(|t| t.mean_avg_landmark_uncertainty()).collect();
                let b: Vec<f64> = near.trials.iter().map(|t| t.mean_avg_landmark_uncertainty()).collect();
                let (w, n, p) = paired_sign_test(&a, &b, |x, y| x < y);
                println!("em lower landmark uncertainty than nearest: {w}/{n}, sign test p = {p:.4}");
            }
            if let (Some(near), Some(rand)) = (find("nearest"), find("random")) {
                let a: Vec<f64> = near.trials.iter().map(|t| t.entropy_reduction_rate()).collect();
                let b: Vec<f64> = rand.trials.iter().map(|t| t.entropy_reduction_rate()).collect();
                let (w, n, p) = paired_sign_test(&a, &b, |x, y| x > y);
                println!("nearest faster entropy reduction than random: {w}/{n}, sign test p = {p:.4}");
            }
        }
        Command::BenchTime { common, policy, checkpoint } => {
            let cfg = load_config(&common)?;
            let ckpt = checkpoint.as_deref().or(cfg.eval.checkpoint.as_deref());
            let policies = match policy {
                Some(names) => policy_list(&names, ckpt)?,
                None => with_checkpoint(&cfg.eval.policies, ckpt)?,
            };
            let rows = benchmark_decision_time(&cfg, &policies, None, &cfg.eval.map_sizes)?;
            std::fs::create_dir_all(&common.out)?;
            write_timing(create(&common.out.join("fig4_decision_time.csv"))?, &rows)?;
            write_timing(std::io::stdout().lock(), &rows)?;
        }
        Command::Replay { common, policy, checkpoint } => {
            let cfg = load_config(&common)?;
            let seed = common.seed.unwrap_or(cfg.eval.seeds[0]);
            let kind = PolicyKind::parse(&policy, checkpoint.as_deref())?;
            let learned = match &kind {
                PolicyKind::Learned(p) => Some(PolicyParameters::load(p)?),
                _ => None,
            };
            let m = replay(&cfg, &kind, learned.as_ref(), seed, &common.out)?;
            println!(
                "replayed {} seed {seed}: {} decisions, {} motion steps, coverage {:.3} -> {}",
                m.policy,
                m.decisions,
                m.motion_steps,
                m.coverage,
                common.out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
