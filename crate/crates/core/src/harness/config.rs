//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! world.size = 40
//! world.landmark_density = 0.005
//! train.algorithm = dqn
//! eval.policies = nearest, random, em
//! eval.seeds = 0..10
//! ```
//!
//! Keys carry a `world.`, `train.` or `eval.` prefix; unknown keys and
//! repeated keys are errors. Angles are in radians.

use std::path::{Path, PathBuf};

use crate::baselines::PolicyKind;
use crate::rl::TrainConfig;
use crate::world::WorldConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub policies: Vec<PolicyKind>,
    pub checkpoint: Option<PathBuf>,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub map_sizes: Vec<f64>,
    /// Decision cap per evaluation episode.
    pub max_decisions: usize,
    /// Decisions timed per trial by the timing benchmark. Every map size gets
    /// the same budget, so graph growth from a longer history does not
    /// masquerade as a map-size effect.
    pub bench_decisions: usize,
    pub bench_trials: usize,
    pub max_graph_nodes: Option<usize>,
    pub output_dir: PathBuf,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            policies: vec![PolicyKind::Nearest, PolicyKind::Random, PolicyKind::Em],
            checkpoint: None,
            trials: 50,
            seeds: (0..50).collect(),
            map_sizes: vec![40.0, 60.0, 80.0, 100.0],
            max_decisions: 400,
            bench_decisions: 50,
            bench_trials: 3,
            max_graph_nodes: None,
            output_dir: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.train.validate()?;
        let e = &self.eval;
        if e.trials == 0 {
            return Err(Error::Config("eval.trials must be at least 1".into()));
        }
        if e.seeds.len() < e.trials {
            return Err(Error::Config(format!("eval.seeds lists {} seeds for {} trials", e.seeds.len(), e.trials)));
        }
        if e.max_decisions == 0 || e.bench_decisions == 0 || e.bench_trials == 0 {
            return Err(Error::Config("eval.max_decisions, eval.bench_decisions and eval.bench_trials must be positive".into()));
        }
        if e.map_sizes.iter().any(|s| !(*s > 0.0)) || e.map_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("eval.map_sizes must be positive and strictly ascending".into()));
        }
        Ok(())
    }

    /// Seeds of the configured trials.
    pub fn trial_seeds(&self) -> &[u64] {
        &self.eval.seeds[..self.eval.trials]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        let mut seeds_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("key `{key}` given twice")));
            }
            if key == "eval.seeds" {
                seeds_set = true;
            }
            cfg.set(key, value).map_err(|m| err(m))?;
        }
        if let Some(ckpt) = &cfg.eval.checkpoint {
            for p in &mut cfg.eval.policies {
                if matches!(p, PolicyKind::Learned(path) if path.as_os_str().is_empty()) {
                    *p = PolicyKind::Learned(ckpt.clone());
                }
            }
        }
        if !seeds_set && cfg.eval.seeds.len() < cfg.eval.trials {
            cfg.eval.seeds = (0..cfg.eval.trials as u64).collect();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let w = &mut self.world;
        let t = &mut self.train;
        let e = &mut self.eval;
        match key {
            "world.size" => {
                let s = num(value)?;
                w.width = s;
                w.height = s;
            }
            "world.width" => w.width = num(value)?,
            "world.height" => w.height = num(value)?,
            "world.landmark_density" => w.landmark_density = num(value)?,
            "world.sensor_range" => w.sensor_range = num(value)?,
            "world.range_noise_sd" => w.range_noise_sd = num(value)?,
            "world.bearing_noise_sd" => w.bearing_noise_sd = num(value)?,
            "world.fov" => w.fov = num(value)?,
            "world.translation_max" => w.translation_max = num(value)?,
            "world.translation_noise_sd" => w.translation_noise_sd = num(value)?,
            "world.rotation_noise_sd" => w.rotation_noise_sd = num(value)?,
            "world.cell_size" => w.cell_size = num(value)?,
            "world.virtual_cell_size" => w.virtual_cell_size = num(value)?,
            "world.virtual_initial_variance" => w.virtual_initial_variance = num(value)?,
            "world.coverage_target" => w.coverage_target = num(value)?,
            "world.min_cluster_cells" => w.min_cluster_cells = int(value)?,
            "world.max_frontier_cells" => w.max_frontier_cells = int(value)?,
            "world.seed" => w.seed = int(value)? as u64,
            "train.algorithm" => t.algorithm = value.parse().map_err(|e: Error| e.to_string())?,
            "train.layer" => t.layer = value.parse().map_err(|e: Error| e.to_string())?,
            "train.hidden" => t.hidden = int(value)?,
            "train.gamma" => t.gamma = num(value)?,
            "train.alpha" => t.alpha = num(value)?,
            "train.beta" => t.beta = num(value)?,
            "train.eta" => t.eta = num(value)?,
            "train.learning_rate" => t.learning_rate = num(value)?,
            "train.batch_size" => t.batch_size = int(value)?,
            "train.buffer_capacity" => t.buffer_capacity = int(value)?,
            "train.target_sync" => t.target_sync = int(value)?,
            "train.policy_update_steps" => t.policy_update_steps = int(value)?,
            "train.dropout_start" => t.dropout_start = num(value)?,
            "train.dropout_end" => t.dropout_end = num(value)?,
            "train.max_training_steps" => t.max_training_steps = int(value)?,
            "train.max_decisions" => t.max_decisions = int(value)?,
            "train.checkpoint_every" => t.checkpoint_every = int(value)?,
            "train.checkpoint_dir" => t.checkpoint_dir = Some(PathBuf::from(value)),
            "train.seed" => t.seed = int(value)? as u64,
            "eval.policies" => {
                e.policies = value
                    .split(',')
                    .map(|p| match p.trim() {
                        // Resolved against eval.checkpoint or --checkpoint once every key is read.
                        "learned" => Ok(PolicyKind::Learned(PathBuf::new())),
                        p => p.parse::<PolicyKind>().map_err(|e| e.to_string()),
                    })
                    .collect::<std::result::Result<_, _>>()?
            }
            "eval.checkpoint" => e.checkpoint = Some(PathBuf::from(value)),
            "eval.trials" => e.trials = int(value)?,
            "eval.seeds" => e.seeds = seed_list(value)?,
            "eval.map_sizes" => e.map_sizes = value.split(',').map(|s| num(s.trim())).collect::<std::result::Result<_, _>>()?,
            "eval.max_decisions" => e.max_decisions = int(value)?,
            "eval.bench_decisions" => e.bench_decisions = int(value)?,
            "eval.bench_trials" => e.bench_trials = int(value)?,
            "eval.max_graph_nodes" => e.max_graph_nodes = Some(int(value)?),
            "eval.output_dir" => e.output_dir = PathBuf::from(value),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }
}

fn num(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("`{v}` is not a finite number"))
}

fn int(v: &str) -> std::result::Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

/// `a, b, c` or the half-open range `a..b`.
fn seed_list(v: &str) -> std::result::Result<Vec<u64>, String> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b) = (int(a.trim())? as u64, int(b.trim())? as u64);
        if a >= b {
            return Err(format!("empty seed range `{v}`"));
        }
        return Ok((a..b).collect());
    }
    v.split(',').map(|s| int(s.trim()).map(|x| x as u64)).collect()
}
