use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::RngCore;

use super::agent::{a2c_update, action_sampling, dqn_update, sample_categorical, A2cHyper, DqnHyper};
use super::env::Episode;
use super::replay::{ReplayBuffer, TransitionSample};
use super::reward::normalized_reward;
use crate::gnn::{softmax, Adam, AdamConfig, GraphBatch, LayerKind, PolicyParameters, DEFAULT_HIDDEN};
use crate::rng::{self, Stream};
use crate::world::WorldConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Dqn,
    A2c,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Dqn => "dqn",
            Algorithm::A2c => "a2c",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(Algorithm::Dqn),
            "a2c" => Ok(Algorithm::A2c),
            other => Err(Error::Config(format!("unknown algorithm `{other}` (expected dqn or a2c)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub layer: LayerKind,
    pub hidden: usize,
    pub gamma: f64,
    /// Cost-to-go weight per meter.
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_sync: usize,
    pub policy_update_steps: usize,
    pub dropout_start: f64,
    pub dropout_end: f64,
    /// Total decisions across all episodes.
    pub max_training_steps: usize,
    /// Decisions per episode before truncation.
    pub max_decisions: usize,
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dqn,
            layer: LayerKind::Gcn,
            hidden: DEFAULT_HIDDEN,
            gamma: 0.99,
            alpha: 1.0,
            beta: 0.5,
            eta: 0.01,
            learning_rate: 1e-3,
            batch_size: 32,
            buffer_capacity: 10_000,
            target_sync: 500,
            policy_update_steps: 16,
            dropout_start: 0.9,
            dropout_end: 0.0,
            max_training_steps: 20_000,
            max_decisions: 200,
            checkpoint_every: 0,
            checkpoint_dir: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("train.gamma must lie in [0, 1)");
        }
        if !(self.eta >= 0.0 && self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad("train.alpha, train.beta and train.eta must be non-negative");
        }
        if !(self.learning_rate > 0.0) {
            return bad("train.learning_rate must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("train.batch_size must be positive and fit in train.buffer_capacity");
        }
        if self.target_sync == 0 || self.policy_update_steps == 0 || self.max_decisions == 0 {
            return bad("train.target_sync, train.policy_update_steps and train.max_decisions must be positive");
        }
        for r in [self.dropout_start, self.dropout_end] {
            if !(0.0..1.0).contains(&r) {
                return bad("dropout rates must lie in [0, 1)");
            }
        }
        if self.hidden == 0 {
            return bad("train.hidden must be positive");
        }
        Ok(())
    }

    /// Linear decay from `dropout_start` to `dropout_end` over training.
    pub fn dropout_rate(&self, step: usize) -> f64 {
        if self.max_training_steps <= 1 {
            return self.dropout_end;
        }
        let t = (step as f64 / (self.max_training_steps - 1) as f64).min(1.0);
        self.dropout_start + (self.dropout_end - self.dropout_start) * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    pub mean_reward: f64,
    pub coverage: f64,
    pub wall_time: f64,
    /// Largest exploration graph the policy saw; not part of the CSV log.
    pub max_graph_nodes: usize,
}

pub const TRAIN_LOG_HEADER: &str = "episode,steps,mean_reward,coverage,wall_time_s";

pub fn write_train_log<W: Write>(mut w: W, log: &[EpisodeLog]) -> std::io::Result<()> {
    writeln!(w, "{TRAIN_LOG_HEADER}")?;
    for e in log {
        writeln!(w, "{},{},{},{},{}", e.episode, e.steps, e.mean_reward, e.coverage, e.wall_time)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: PolicyParameters,
    /// Value network, present for actor-critic training.
    pub value: Option<PolicyParameters>,
    pub log: Vec<EpisodeLog>,
    pub steps: usize,
}

/// World seed of training episode `index`.
pub fn episode_seed(train_seed: u64, index: usize) -> u64 {
    rng::substream(train_seed, Stream::World, index as u64).next_u64()
}

struct Learner {
    cfg: TrainConfig,
    policy: PolicyParameters,
    policy_adam: Adam,
    target: PolicyParameters,
    value: Option<(PolicyParameters, Adam)>,
    buffer: ReplayBuffer,
    rollout: Vec<TransitionSample>,
    replay_rng: rng::StreamRng,
    updates: usize,
}

impl Learner {
    fn new(cfg: &TrainConfig) -> Result<Self> {
        let mut init = rng::stream(cfg.seed, Stream::Init);
        let policy = PolicyParameters::new(cfg.layer, cfg.hidden, &mut init)?;
        let adam = AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() };
        let value = match cfg.algorithm {
            Algorithm::A2c => Some((PolicyParameters::new(cfg.layer, cfg.hidden, &mut init)?, Adam::new(adam))),
            Algorithm::Dqn => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            target: policy.clone(),
            policy,
            policy_adam: Adam::new(adam),
            value,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            rollout: Vec::new(),
            replay_rng: rng::stream(cfg.seed, Stream::Replay),
            updates: 0,
        })
    }

    /// Stores one transition and runs whatever update is due. Returns the
    /// loss of that update, if any.
    fn observe(&mut self, sample: TransitionSample, episode_over: bool) -> Result<Option<f64>> {
        match self.cfg.algorithm {
            Algorithm::Dqn => {
                self.buffer.push(sample);
                if self.buffer.len() < self.cfg.batch_size {
                    return Ok(None);
                }
                let batch = self.buffer.sample(self.cfg.batch_size, &mut self.replay_rng);
                let loss = dqn_update(&batch, &mut self.policy, &self.target, &mut self.policy_adam, DqnHyper { gamma: self.cfg.gamma })?;
                self.updates += 1;
                if self.updates % self.cfg.target_sync == 0 {
                    self.target = self.policy.clone();
                }
                Ok(Some(loss))
            }
            Algorithm::A2c => {
                self.rollout.push(sample);
                if self.rollout.len() < self.cfg.policy_update_steps && !episode_over {
                    return Ok(None);
                }
                let (value, value_adam) = self.value.as_mut().expect("value network");
                let hyper = A2cHyper { gamma: self.cfg.gamma, beta: self.cfg.beta, eta: self.cfg.eta };
                let loss = a2c_update(&self.rollout, &mut self.policy, value, &mut self.policy_adam, value_adam, hyper)?;
                self.rollout.clear();
                self.updates += 1;
                Ok(Some(loss.total))
            }
        }
    }

    fn save(&self, dir: &std::path::Path, stem: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{stem}.ckpt"));
        self.policy.save(&path)?;
        if let Some((v, _)) = &self.value {
            v.save(&dir.join(format!("{stem}.value.ckpt")))?;
        }
        Ok(path)
    }
}

/// Trains a policy over freshly generated worlds until
/// `max_training_steps` decisions have been taken.
pub fn train(cfg: &TrainConfig, world: &WorldConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    world.validate()?;
    let mut learner = Learner::new(cfg)?;
    let mut dropout_rng = rng::stream(cfg.seed, Stream::Dropout);
    let mut policy_rng = rng::stream(cfg.seed, Stream::Policy);
    let mut log = Vec::new();
    let mut step = 0;
    let mut episode_index = 0;
    let mut idle_episodes = 0;
    while step < cfg.max_training_steps {
        let started = Instant::now();
        let mut wc = world.clone();
        wc.seed = episode_seed(cfg.seed, episode_index);
        let mut env = Episode::new(&wc)?;
        let mut rewards = Vec::new();
        let mut max_graph_nodes = 0;
        let mut graph = env.graph();
        while let Some(g) = graph.take() {
            if step >= cfg.max_training_steps || env.is_done() || env.decisions() >= cfg.max_decisions {
                break;
            }
            max_graph_nodes = max_graph_nodes.max(g.num_nodes());
            let batch = GraphBatch::from_graph(&g);
            let action = match cfg.algorithm {
                Algorithm::Dqn => action_sampling(&batch, &learner.policy, cfg.dropout_rate(step), &mut dropout_rng)?,
                Algorithm::A2c => sample_categorical(&softmax(&learner.policy.scores(&batch)?), &mut policy_rng),
            };
            let raw = env.raw_rewards(cfg.alpha);
            let reward = normalized_reward(&raw, action, env.nearest_frontier()?)?;
            env.execute(action)?;
            step += 1;
            rewards.push(reward);
            let next = env.graph();
            let terminal = env.is_done();
            let over = terminal || env.decisions() >= cfg.max_decisions || step >= cfg.max_training_steps;
            let sample = TransitionSample::new(g, action, reward, next.clone(), terminal);
            if let Some(loss) = learner.observe(sample, over)? {
                if !loss.is_finite() {
                    let dir = cfg.checkpoint_dir.clone().unwrap_or_else(std::env::temp_dir);
                    let path = learner.save(&dir, &format!("diagnostic-step{step}"))?;
                    return Err(Error::NonFiniteLoss { step, path });
                }
            }
            graph = next;
        }
        let mean_reward = if rewards.is_empty() { 0.0 } else { rewards.iter().sum::<f64>() / rewards.len() as f64 };
        log.push(EpisodeLog {
            episode: episode_index,
            steps: rewards.len(),
            mean_reward,
            coverage: env.coverage(),
            wall_time: started.elapsed().as_secs_f64(),
            max_graph_nodes,
        });
        episode_index += 1;
        if let (Some(dir), true) = (&cfg.checkpoint_dir, cfg.checkpoint_every > 0) {
            if episode_index % cfg.checkpoint_every == 0 {
                learner.save(dir, &format!("episode{episode_index}"))?;
            }
        }
        idle_episodes = if rewards.is_empty() { idle_episodes + 1 } else { 0 };
        if idle_episodes > 100 {
            return Err(Error::Contract("100 consecutive episodes offered no decision".into()));
        }
    }
    Ok(TrainOutcome { value: learner.value.map(|(v, _)| v), policy: learner.policy, log, steps: step })
}
