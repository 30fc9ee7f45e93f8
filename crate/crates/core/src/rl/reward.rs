use super::env::Episode;
use crate::slam::NoiseModel;
use crate::virtual_map::{simulate_candidate, Belief, VirtualMap};
use crate::world::WorldConfig;
use crate::gnn::argmax;
use crate::{Error, Result};

/// Min-max normalized reward of `chosen` given every candidate's raw reward.
///
/// With `r ∈ [0, 1]` the normalized value, returns `r − 1` when the nearest
/// frontier attains the maximum raw reward and `2r − 1` otherwise. When all
/// raw rewards are equal, `r = 0`.
pub fn normalized_reward(raw: &[f64], chosen: usize, nearest: usize) -> Result<f64> {
    if chosen >= raw.len() || nearest >= raw.len() {
        return Err(Error::Contract(format!("frontier index out of range for {} candidates", raw.len())));
    }
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let r = if max > min { (raw[chosen] - min) / (max - min) } else { 0.0 };
    Ok(if nearest_is_max(raw, nearest) { r - 1.0 } else { 2.0 * r - 1.0 })
}

/// True when the nearest frontier attains the maximum raw reward.
pub fn nearest_is_max(raw: &[f64], nearest: usize) -> bool {
    raw[nearest] >= raw[argmax(raw)]
}

/// Utility now minus the predicted utility after driving to `goal`, minus
/// `alpha` times the path length.
pub fn candidate_raw_reward(
    vm: &VirtualMap,
    belief: &Belief,
    goal: [f64; 2],
    config: &WorldConfig,
    noise: &NoiseModel,
    alpha: f64,
) -> f64 {
    let outcome = simulate_candidate(vm, belief, goal, config, noise);
    vm.utility() - outcome.predicted_utility - alpha * outcome.travel_cost
}

/// Raw utility-minus-cost reward of one frontier.
pub fn raw_reward(episode: &Episode, frontier: usize, alpha: f64) -> Result<f64> {
    episode.raw_reward(frontier, alpha)
}

/// Normalized reward for choosing `frontier` in the episode's current state.
pub fn reward(episode: &Episode, frontier: usize, alpha: f64) -> Result<f64> {
    let raw = episode.raw_rewards(alpha);
    normalized_reward(&raw, frontier, episode.nearest_frontier()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let raw = [2.0, 4.0, 6.0];
        assert_eq!(normalized_reward(&raw, 1, 0).unwrap(), 0.0);
        assert_eq!(normalized_reward(&raw, 2, 2).unwrap(), 0.0);
        assert_eq!(normalized_reward(&raw, 0, 2).unwrap(), -1.0);
        assert_eq!(normalized_reward(&raw, 2, 0).unwrap(), 1.0);
        assert_eq!(normalized_reward(&[3.5], 0, 0).unwrap(), -1.0);
        assert_eq!(normalized_reward(&[1.0, 1.0], 1, 1).unwrap(), -1.0);
        assert!(normalized_reward(&raw, 3, 0).is_err());
    }
}
