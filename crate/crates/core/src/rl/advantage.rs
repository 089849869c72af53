//! Generalized advantage estimation, advantage mixing and critic targets.
//! Arrays are `[T, N]` row-major: index `t·n + i`.

use crate::error::{Error, Result};

use super::config::ValueTarget;

fn check_len(what: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::dim(what, expected, actual));
    }
    Ok(())
}

/// GAE by backward recursion.
///
/// `next_values[t·n+i]` is the value bootstrapped into `δ_t`: `V(s_{t+1})`
/// while the episode continues or was truncated, `0` when it terminated.
/// `dones` marks both terminations and truncations and stops the recursion:
/// `δ_t = r_t + γ·next_t − V_t`, `A_t = δ_t + γλ(1 − done_t)·A_{t+1}`.
pub fn compute_gae(rewards: &[f64], values: &[f64], next_values: &[f64], dones: &[bool], n: usize, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if n == 0 || rewards.len() % n != 0 {
        return Err(Error::dim("gae env count", n, rewards.len()));
    }
    check_len("gae values", rewards.len(), values.len())?;
    check_len("gae next values", rewards.len(), next_values.len())?;
    check_len("gae dones", rewards.len(), dones.len())?;
    let t_len = rewards.len() / n;
    let mut adv = vec![0.0; rewards.len()];
    let mut carry = vec![0.0; n];
    for t in (0..t_len).rev() {
        for i in 0..n {
            let k = t * n + i;
            let delta = rewards[k] + gamma * next_values[k] - values[k];
            let cont = if dones[k] { 0.0 } else { 1.0 };
            carry[i] = delta + gamma * lambda * cont * carry[i];
            adv[k] = carry[i];
        }
    }
    Ok(adv)
}

/// Population mean and standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

/// `Ã = Σ w_i (A_i − μ_i) / (σ_i + eps)` with batch statistics per stream.
pub fn mix_advantages(streams: &[Vec<f64>], weights: &[f64], eps: f64) -> Result<Vec<f64>> {
    check_len("advantage streams", weights.len(), streams.len())?;
    let len = streams.first().map_or(0, Vec::len);
    let mut out = vec![0.0; len];
    for (a, &w) in streams.iter().zip(weights) {
        check_len("advantage stream length", len, a.len())?;
        let (mu, sigma) = mean_std(a);
        let d = sigma + eps;
        for (o, v) in out.iter_mut().zip(a) {
            *o += w * ((v - mu) / d);
        }
    }
    Ok(out)
}

/// `w₁r¹ + w₂r² + w₃r³`.
pub fn single_critic_reward(r: [f64; 3], w: [f64; 3]) -> f64 {
    w[0] * r[0] + w[1] * r[1] + w[2] * r[2]
}

/// Regression targets for one critic.
pub fn value_targets(mode: ValueTarget, advantages: &[f64], values: &[f64], rewards: &[f64], next_values: &[f64], gamma: f64) -> Vec<f64> {
    match mode {
        ValueTarget::GaeReturn => advantages.iter().zip(values).map(|(a, v)| a + v).collect(),
        ValueTarget::TdOneStep => rewards.iter().zip(next_values).map(|(r, nv)| r + gamma * nv).collect(),
    }
}

/// Mean squared error.
pub fn critic_loss(values: &[f64], targets: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().zip(targets).map(|(v, t)| (v - t) * (v - t)).sum::<f64>() / values.len() as f64
}

/// `min(ρA, clip(ρ, 1−ε, 1+ε)·A)` for one sample.
pub fn clipped_surrogate(ratio: f64, adv: f64, clip: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - clip, 1.0 + clip) * adv)
}
