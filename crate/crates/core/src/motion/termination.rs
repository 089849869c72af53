use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JointMode {
    /// Terminate when any joint deviates beyond the threshold.
    #[default]
    Any,
    /// Terminate only when every joint deviates beyond the threshold.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationConfig {
    pub pos_threshold: f64,
    /// Geodesic angle threshold, radians.
    pub orient_threshold: f64,
    pub joint_threshold: f64,
    /// Use `‖Im(conj(q)·q̂)‖ < quat_im_threshold` instead of the angle test.
    pub quat_im_mode: bool,
    pub quat_im_threshold: f64,
    pub joint_mode: JointMode,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self {
            pos_threshold: 0.5,
            orient_threshold: 1.0,
            joint_threshold: 1.0,
            quat_im_mode: false,
            quat_im_threshold: 0.8,
            joint_mode: JointMode::Any,
        }
    }
}

impl TerminationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("termination.pos_threshold", self.pos_threshold),
            ("termination.orient_threshold", self.orient_threshold),
            ("termination.joint_threshold", self.joint_threshold),
            ("termination.quat_im_threshold", self.quat_im_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::schema(name, format!("threshold must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    Position,
    Orientation,
    Joint,
}

/// Termination test at a keyframe reach time. Conditions are checked in the
/// order position, orientation, joint and the first violated one is reported.
pub fn check_termination(
    base: &Pose,
    theta: &[f64],
    world_ref: &Pose,
    theta_ref: &[f64],
    cfg: &TerminationConfig,
) -> Option<TerminationCause> {
    if geom::norm(geom::sub(base.p, world_ref.p)) > cfg.pos_threshold {
        return Some(TerminationCause::Position);
    }
    let rel = base.q.canonical().conj() * world_ref.q.canonical();
    let orient = if cfg.quat_im_mode {
        rel.im_norm() < cfg.quat_im_threshold
    } else {
        rel.angle() > cfg.orient_threshold
    };
    if orient {
        return Some(TerminationCause::Orientation);
    }
    let mut dev = theta.iter().zip(theta_ref).map(|(a, b)| (a - b).abs() > cfg.joint_threshold);
    let joint = match cfg.joint_mode {
        JointMode::Any => dev.any(|d| d),
        JointMode::All => !theta.is_empty() && dev.all(|d| d),
    };
    joint.then_some(TerminationCause::Joint)
}
