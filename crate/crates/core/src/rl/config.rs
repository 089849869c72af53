use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How critics are regressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValueTarget {
    /// `A + V`.
    #[default]
    GaeReturn,
    /// `r + γ·V(s')`.
    TdOneStep,
}

/// One critic per reward group with mixed advantages, or one critic on the
/// weighted reward sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    #[default]
    Multi,
    Single,
}

impl std::str::FromStr for CriticMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi" => Ok(CriticMode::Multi),
            "single" => Ok(CriticMode::Single),
            _ => Err(Error::Config(format!("unknown critic mode `{s}` (expected multi or single)"))),
        }
    }
}

pub const LR_MIN: f64 = 1e-6;
pub const LR_MAX: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PPOConfig {
    pub lr: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub desired_kl: f64,
    /// Adjust the learning rate from the measured KL after every minibatch.
    pub adaptive_lr: bool,
    pub max_grad_norm: f64,
    pub num_minibatches: usize,
    pub gamma: f64,
    pub lambda: f64,
    /// Mixing weights for the task, regularization and safety groups.
    pub weights: [f64; 3],
    pub epochs: usize,
    pub rollout: usize,
    pub num_envs: usize,
    pub norm_eps: f64,
    pub value_target: ValueTarget,
    pub weight_decay: f64,
    /// Samples per gradient chunk; chunks run in parallel and are summed in order.
    pub chunk: usize,
}

impl Default for PPOConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            clip: 0.2,
            entropy_coef: 0.0,
            value_coef: 1.0,
            desired_kl: 0.01,
            adaptive_lr: true,
            max_grad_norm: 1.0,
            num_minibatches: 4,
            gamma: 0.99,
            lambda: 0.95,
            weights: [0.7, 0.1, 0.2],
            epochs: 5,
            rollout: 24,
            num_envs: 256,
            norm_eps: 1e-8,
            value_target: ValueTarget::GaeReturn,
            weight_decay: 0.01,
            chunk: 128,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: &str| Err(Error::schema(format!("ppo.{f}"), m));
        if self.weights.iter().map(|w| w.abs()).sum::<f64>() <= 0.0 || self.weights.iter().any(|w| !w.is_finite()) {
            return bad("weights", "mixing weights must be finite with a nonzero sum of magnitudes");
        }
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(name, "must lie in (0, 1]");
            }
        }
        if !(self.lr > 0.0) || !(self.clip > 0.0) || !(self.max_grad_norm > 0.0) || !(self.norm_eps > 0.0) || !(self.desired_kl > 0.0) {
            return bad("lr", "lr, clip, max_grad_norm, desired_kl and norm_eps must be > 0");
        }
        if !(self.entropy_coef >= 0.0) || !(self.value_coef >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("entropy_coef", "coefficients must be >= 0");
        }
        if self.epochs == 0 || self.rollout == 0 || self.num_envs == 0 || self.num_minibatches == 0 || self.chunk == 0 {
            return bad("epochs", "epochs, rollout, num_envs, num_minibatches and chunk must be >= 1");
        }
        let batch = self.rollout * self.num_envs;
        if batch % self.num_minibatches != 0 {
            return bad("num_minibatches", &format!("must divide the batch size {batch}"));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.rollout * self.num_envs
    }
}

/// `lr/1.5` above `2·desired_kl`, `lr·1.5` below `desired_kl/2`, clamped.
pub fn adapt_lr(lr: f64, kl: f64, desired_kl: f64) -> f64 {
    let next = if kl > 2.0 * desired_kl {
        lr / 1.5
    } else if kl < desired_kl / 2.0 && kl >= 0.0 {
        lr * 1.5
    } else {
        lr
    };
    next.clamp(LR_MIN, LR_MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PPOConfig::default().validate().unwrap();
        let c = PPOConfig { num_envs: 3, rollout: 5, ..Default::default() };
        assert!(c.validate().is_err());
        assert!(PPOConfig { weights: [0.0; 3], ..Default::default() }.validate().is_err());
        assert!(PPOConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn lr_schedule() {
        assert_eq!(adapt_lr(1e-4, 0.05, 0.01), 1e-4 / 1.5);
        assert_eq!(adapt_lr(1e-4, 0.001, 0.01), 1e-4 * 1.5);
        assert_eq!(adapt_lr(1e-4, 0.01, 0.01), 1e-4);
        assert_eq!(adapt_lr(1e-2, 0.0, 0.01), LR_MAX);
        assert_eq!(adapt_lr(1e-6, 1.0, 0.01), LR_MIN);
    }
}
