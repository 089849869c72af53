//! Grouped rewards. Every term is a Gaussian kernel of an error magnitude and
//! terms within a group are multiplied, so each group reward lies in `(0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Pose};

/// `exp(-a / b²)`. Negative `a` is clamped to zero.
#[inline]
pub fn psi(a: f64, b: f64) -> f64 {
    (-a.max(0.0) / (b * b)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskRewardConfig {
    pub base_pos: f64,
    pub base_orient: f64,
    pub joint: f64,
}

impl Default for TaskRewardConfig {
    fn default() -> Self {
        Self { base_pos: 0.4, base_orient: 0.8, joint: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizationRewardConfig {
    pub action_rate: f64,
    pub joint_acc: f64,
    pub joint_vel: f64,
}

impl Default for RegularizationRewardConfig {
    fn default() -> Self {
        Self { action_rate: 1.0, joint_acc: 500.0, joint_vel: 15.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyRewardConfig {
    pub pos_limit: f64,
    pub torque_limit: f64,
    /// Fraction of the torque limit tolerated before the penalty starts.
    pub limit_margin: f64,
}

impl Default for SafetyRewardConfig {
    fn default() -> Self {
        Self { pos_limit: 0.1, torque_limit: 0.1, limit_margin: 0.9 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub task: TaskRewardConfig,
    pub regularization: RegularizationRewardConfig,
    pub safety: SafetyRewardConfig,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("reward.task.base_pos", self.task.base_pos),
            ("reward.task.base_orient", self.task.base_orient),
            ("reward.task.joint", self.task.joint),
            ("reward.regularization.action_rate", self.regularization.action_rate),
            ("reward.regularization.joint_acc", self.regularization.joint_acc),
            ("reward.regularization.joint_vel", self.regularization.joint_vel),
            ("reward.safety.pos_limit", self.safety.pos_limit),
            ("reward.safety.torque_limit", self.safety.torque_limit),
        ];
        for (name, b) in widths {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::schema(name, format!("kernel width must be > 0, got {b}")));
            }
        }
        if !(self.safety.limit_margin > 0.0) {
            return Err(Error::schema("reward.safety.limit_margin", "margin must be > 0"));
        }
        Ok(())
    }
}

/// Keeps a group product strictly positive when the kernels underflow.
#[inline]
fn floor_positive(r: f64) -> f64 {
    r.max(f64::MIN_POSITIVE)
}

pub(crate) fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Tracking reward at a keyframe's reach time, errors measured in the world frame.
pub fn task_reward(base: &Pose, theta: &[f64], world_ref: &Pose, theta_ref: &[f64], cfg: &TaskRewardConfig) -> f64 {
    let pos_err = geom::norm(geom::sub(base.p, world_ref.p));
    let orient_err = base.q.canonical().angle_to(&world_ref.q.canonical());
    let joint_err = l2_diff(theta, theta_ref);
    floor_positive(psi(pos_err, cfg.base_pos) * psi(orient_err, cfg.base_orient) * psi(joint_err, cfg.joint))
}

/// Dense smoothness reward; joint acceleration is a backward difference over `dt`.
pub fn regularization_reward(
    theta_dot: &[f64],
    prev_theta_dot: &[f64],
    action: &[f64],
    prev_action: &[f64],
    dt: f64,
    cfg: &RegularizationRewardConfig,
) -> f64 {
    let rate = l2_diff(action, prev_action);
    let acc = l2_diff(theta_dot, prev_theta_dot) / dt;
    let vel = l2(theta_dot);
    floor_positive(psi(rate, cfg.action_rate) * psi(acc, cfg.joint_acc) * psi(vel, cfg.joint_vel))
}

/// Worst joint-limit violation (positive when outside `[lo, hi]`), floored at 0.
pub fn limit_violation(theta: &[f64], limits: &[[f64; 2]]) -> f64 {
    theta
        .iter()
        .zip(limits)
        .map(|(&t, l)| (t - l[1]).max(l[0] - t))
        .fold(0.0, f64::max)
}

/// Worst torque excess over `margin · τ_max`, floored at 0.
pub fn torque_excess(torques: &[f64], torque_limits: &[f64], margin: f64) -> f64 {
    torques
        .iter()
        .zip(torque_limits)
        .map(|(&t, &m)| (t.abs() - margin * m).max(0.0))
        .fold(0.0, f64::max)
}

pub fn safety_reward(theta: &[f64], torques: &[f64], limits: &[[f64; 2]], torque_limits: &[f64], cfg: &SafetyRewardConfig) -> f64 {
    floor_positive(
        psi(limit_violation(theta, limits), cfg.pos_limit)
            * psi(torque_excess(torques, torque_limits, cfg.limit_margin), cfg.torque_limit),
    )
}
