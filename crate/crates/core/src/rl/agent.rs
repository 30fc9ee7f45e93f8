use rand::Rng;

use super::replay::TransitionSample;
use crate::gnn::{argmax, softmax, Adam, Dropout, GraphBatch, PolicyParameters, Tensor};
use crate::par;
use crate::rng::StreamRng;
use crate::Result;

/// Greedy frontier under one stochastic forward pass with dropout at `rate`.
pub fn action_sampling(batch: &GraphBatch, params: &PolicyParameters, rate: f64, rng: &mut StreamRng) -> Result<usize> {
    if batch.num_frontiers() == 1 {
        return Ok(0);
    }
    let mut dropout = if rate > 0.0 { Dropout::training(rate, rng) } else { Dropout::inference() };
    let forward = params.forward(batch, &mut dropout)?;
    Ok(argmax(forward.scores()))
}

/// Draws a frontier from the softmax of the policy scores.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// `y − Q` with `y = r + γ·max Q'` (no bootstrap when `next_max` is `None`).
pub fn td_error(q: f64, reward: f64, gamma: f64, next_max: Option<f64>) -> f64 {
    reward + next_max.map_or(0.0, |m| gamma * m) - q
}

/// `Σ_f π_f ln π_f`, with `0 ln 0 = 0`.
pub fn entropy_term(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum()
}

/// `−A ln π(a) + β A² + η Σ π ln π` with `A = ret − value`.
pub fn a2c_sample_loss(ret: f64, value: f64, probs: &[f64], action: usize, beta: f64, eta: f64) -> f64 {
    let adv = ret - value;
    -adv * probs[action].ln() + beta * adv * adv + eta * entropy_term(probs)
}

/// Gradient of [`a2c_sample_loss`] with respect to the policy scores (the
/// softmax logits), at fixed advantage `adv`.
pub fn a2c_score_gradient(adv: f64, probs: &[f64], action: usize, eta: f64) -> Vec<f64> {
    let ent = entropy_term(probs);
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let onehot = if j == action { 1.0 } else { 0.0 };
            let log_p = if p > 0.0 { p.ln() } else { 0.0 };
            -adv * (onehot - p) + eta * p * (log_p - ent)
        })
        .collect()
}

/// Discounted n-step returns, bootstrapped by `bootstrap` after the last
/// sample unless a terminal sample cuts the chain.
pub fn n_step_returns(rewards: &[f64], terminal: &[bool], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for k in (0..rewards.len()).rev() {
        if terminal[k] {
            acc = 0.0;
        }
        acc = rewards[k] + gamma * acc;
        out[k] = acc;
    }
    out
}

fn sum_gradients(per_sample: Vec<Vec<Tensor>>) -> Vec<Tensor> {
    let mut iter = per_sample.into_iter();
    let mut total = iter.next().expect("at least one sample");
    for g in iter {
        for (t, s) in total.iter_mut().zip(&g) {
            t.add_assign(s);
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqnHyper {
    pub gamma: f64,
}

/// One minibatch step on the mean squared TD error against `target`.
/// Returns the loss before the step.
pub fn dqn_update(
    samples: &[&TransitionSample],
    params: &mut PolicyParameters,
    target: &PolicyParameters,
    adam: &mut Adam,
    hyper: DqnHyper,
) -> Result<f64> {
    let n = samples.len() as f64;
    let current: &PolicyParameters = params;
    let results = par::map(samples, |s| -> Result<(f64, Vec<Tensor>)> {
        let next_max = match (s.terminal, s.next_batch()) {
            (false, Some(b)) => Some(target.scores(b)?.into_iter().fold(f64::NEG_INFINITY, f64::max)),
            _ => None,
        };
        let forward = current.forward(&s.batch, &mut Dropout::inference())?;
        let delta = td_error(forward.scores()[s.action], s.reward, hyper.gamma, next_max);
        let mut seed = vec![0.0; forward.scores().len()];
        seed[s.action] = -2.0 * delta / n;
        Ok((delta * delta, forward.backward(&seed)))
    });
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(results.len());
    for r in results {
        let (l, g) = r?;
        loss += l;
        grads.push(g);
    }
    let loss = loss / n;
    if loss.is_finite() {
        adam.step(&mut params.tensors, &sum_gradients(grads));
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2cHyper {
    pub gamma: f64,
    pub beta: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2cLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
}

/// State value: the largest value-network output over the frontiers.
pub fn state_value(value: &PolicyParameters, batch: &GraphBatch) -> Result<f64> {
    Ok(value.scores(batch)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// One actor-critic step on a rollout, updating both networks.
pub fn a2c_update(
    rollout: &[TransitionSample],
    policy: &mut PolicyParameters,
    value: &mut PolicyParameters,
    policy_adam: &mut Adam,
    value_adam: &mut Adam,
    hyper: A2cHyper,
) -> Result<A2cLoss> {
    assert!(!rollout.is_empty(), "rollout must be non-empty");
    let last = rollout.last().unwrap();
    let bootstrap = match (last.terminal, last.next_batch()) {
        (false, Some(b)) => state_value(value, b)?,
        _ => 0.0,
    };
    let rewards: Vec<f64> = rollout.iter().map(|s| s.reward).collect();
    let terminal: Vec<bool> = rollout.iter().map(|s| s.terminal).collect();
    let returns = n_step_returns(&rewards, &terminal, bootstrap, hyper.gamma);
    let n = rollout.len() as f64;
    let (pol, val): (&PolicyParameters, &PolicyParameters) = (policy, value);
    let indexed: Vec<(usize, &TransitionSample)> = rollout.iter().enumerate().collect();
    let results = par::map(&indexed, |&(k, s)| -> Result<(A2cLoss, Vec<Tensor>, Vec<Tensor>)> {
        let vf = val.forward(&s.batch, &mut Dropout::inference())?;
        let best = argmax(vf.scores());
        let v = vf.scores()[best];
        let adv = returns[k] - v;
        let mut vseed = vec![0.0; vf.scores().len()];
        vseed[best] = -2.0 * hyper.beta * adv / n;
        let pf = pol.forward(&s.batch, &mut Dropout::inference())?;
        let probs = softmax(pf.scores());
        let ent = entropy_term(&probs);
        let pseed: Vec<f64> =
            a2c_score_gradient(adv, &probs, s.action, hyper.eta).into_iter().map(|g| g / n).collect();
        let loss = A2cLoss {
            total: a2c_sample_loss(returns[k], v, &probs, s.action, hyper.beta, hyper.eta),
            policy: -adv * probs[s.action].ln(),
            value: hyper.beta * adv * adv,
            entropy: ent,
        };
        Ok((loss, pf.backward(&pseed), vf.backward(&vseed)))
    });
    let mut total = A2cLoss { total: 0.0, policy: 0.0, value: 0.0, entropy: 0.0 };
    let (mut pg, mut vg) = (Vec::new(), Vec::new());
    for r in results {
        let (l, p, v) = r?;
        total.total += l.total / n;
        total.policy += l.policy / n;
        total.value += l.value / n;
        total.entropy += l.entropy / n;
        pg.push(p);
        vg.push(v);
    }
    if total.total.is_finite() {
        policy_adam.step(&mut policy.tensors, &sum_gradients(pg));
        value_adam.step(&mut value.tensors, &sum_gradients(vg));
    }
    Ok(total)
}
