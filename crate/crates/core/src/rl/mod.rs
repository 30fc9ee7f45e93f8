//! Episode environment, reward shaping, replay, DQN and actor-critic
//! updates, and the training loop.

mod agent;
mod env;
mod replay;
mod reward;
mod train;

pub use agent::{
    a2c_sample_loss, a2c_score_gradient, a2c_update, action_sampling, dqn_update, entropy_term, n_step_returns, sample_categorical,
    state_value, td_error, A2cHyper, A2cLoss, DqnHyper,
};
pub use env::{Episode, StepRecord};
pub use replay::{ReplayBuffer, TransitionSample};
pub use reward::{candidate_raw_reward, nearest_is_max, normalized_reward, raw_reward, reward};
pub use train::{episode_seed, train, write_train_log, Algorithm, EpisodeLog, TrainConfig, TrainOutcome, TRAIN_LOG_HEADER};
