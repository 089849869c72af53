//! Procedural planar reference motions.
//!
//! Each motion is a piecewise-linear path through a handful of key poses,
//! sampled at `fps`. Key poses name joints by link name; joints a chain lacks
//! are ignored and unnamed joints take the chain's default pose. The references
//! are kinematic only and not guaranteed to be dynamically feasible.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::trajectory::{MotionFrame, MotionTrajectory};
use crate::error::{Error, Result};
use crate::geom::{Pose, Quat};
use crate::kinematics::KinematicChain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotionKind {
    #[serde(rename = "getup-2d")]
    GetUp2d,
    #[serde(rename = "crouch")]
    Crouch,
    #[serde(rename = "stand-reach")]
    StandReach,
}

impl MotionKind {
    pub const ALL: [MotionKind; 3] = [MotionKind::GetUp2d, MotionKind::Crouch, MotionKind::StandReach];

    pub fn name(&self) -> &'static str {
        match self {
            MotionKind::GetUp2d => "getup-2d",
            MotionKind::Crouch => "crouch",
            MotionKind::StandReach => "stand-reach",
        }
    }

    pub fn default_duration(&self) -> f64 {
        match self {
            MotionKind::GetUp2d => 4.0,
            MotionKind::Crouch | MotionKind::StandReach => 3.0,
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MotionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown motion kind `{s}` (expected getup-2d, crouch or stand-reach)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    /// Seconds; `None` uses the kind's default.
    pub duration: Option<f64>,
    pub fps: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self { duration: None, fps: 50.0 }
    }
}

struct KeyPose {
    /// Fraction of the motion duration.
    at: f64,
    pitch: f64,
    x: f64,
    joints: &'static [(&'static str, f64)],
}

const STAND: &[(&str, f64)] = &[];
const KNEEL: &[(&str, f64)] = &[
    ("torso", 0.2),
    ("l_thigh", -0.3),
    ("l_shank", 1.57),
    ("r_thigh", -0.3),
    ("r_shank", 1.57),
    ("l_arm", -0.3),
    ("r_arm", -0.3),
];
const CROUCH: &[(&str, f64)] = &[
    ("torso", 0.5),
    ("l_thigh", -1.6),
    ("l_shank", 2.2),
    ("r_thigh", -1.6),
    ("r_shank", 2.2),
    ("l_arm", -0.8),
    ("r_arm", -0.8),
];
const REACH_UP: &[(&str, f64)] = &[("torso", 0.1), ("l_arm", -1.5), ("r_arm", -1.5)];
const REACH_BACK: &[(&str, f64)] = &[("l_arm", 0.5), ("r_arm", 0.5)];

fn key_poses(kind: MotionKind) -> Vec<KeyPose> {
    let kp = |at, pitch, joints| KeyPose { at, pitch, x: 0.0, joints };
    match kind {
        MotionKind::GetUp2d => vec![
            kp(0.0, FRAC_PI_2, STAND),
            kp(0.15, FRAC_PI_2, STAND),
            kp(0.4, 0.3, KNEEL),
            kp(0.65, 0.4, CROUCH),
            kp(0.9, 0.0, STAND),
            kp(1.0, 0.0, STAND),
        ],
        MotionKind::Crouch => vec![kp(0.0, 0.0, STAND), kp(0.5, 0.4, CROUCH), kp(1.0, 0.0, STAND)],
        // legs and base never move, so the grounded height is the same at every key
        MotionKind::StandReach => vec![
            kp(0.0, 0.0, STAND),
            kp(0.33, 0.0, REACH_UP),
            kp(0.66, 0.0, REACH_BACK),
            kp(1.0, 0.0, STAND),
        ],
    }
}

fn joint_vector(chain: &KinematicChain, joints: &[(&str, f64)]) -> Vec<f64> {
    let names = chain.joint_names();
    let mut theta = chain.default_pose().to_vec();
    for (name, v) in joints {
        if let Some(j) = names.iter().position(|n| n == name) {
            theta[j] = *v;
        }
    }
    theta
}

/// Generates a reference motion of the given kind for `chain`, lifted so no
/// frame penetrates the ground.
pub fn gen_motion(kind: MotionKind, chain: &KinematicChain, params: &GenParams) -> Result<MotionTrajectory> {
    let duration = params.duration.unwrap_or(kind.default_duration());
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::Config(format!("motion duration must be > 0, got {duration}")));
    }
    if !(params.fps > 0.0 && params.fps.is_finite()) {
        return Err(Error::Config(format!("fps must be > 0, got {}", params.fps)));
    }
    let n = ((duration * params.fps).round() as usize).max(2);

    struct Resolved {
        at: f64,
        pitch: f64,
        x: f64,
        z: f64,
        theta: Vec<f64>,
    }
    let keys: Vec<Resolved> = key_poses(kind)
        .into_iter()
        .map(|k| {
            let theta = joint_vector(chain, k.joints);
            // key poses rest their lowest collision point on the ground
            let z = -chain.min_point_height(&Pose::new([k.x, 0.0, 0.0], Quat::rot_y(k.pitch)), &theta)?;
            Ok(Resolved { at: k.at, pitch: k.pitch, x: k.x, z, theta })
        })
        .collect::<Result<_>>()?;

    let span = (n - 1) as f64;
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let u = i as f64 / span;
        let seg = keys.windows(2).position(|w| u <= w[1].at).unwrap_or(keys.len() - 2);
        let (a, b) = (&keys[seg], &keys[seg + 1]);
        let s = if b.at > a.at { ((u - a.at) / (b.at - a.at)).clamp(0.0, 1.0) } else { 1.0 };
        let lerp = |p: f64, q: f64| p + s * (q - p);
        let mut frame = MotionFrame {
            p: [lerp(a.x, b.x), 0.0, lerp(a.z, b.z)],
            q: Quat::rot_y(lerp(a.pitch, b.pitch)),
            theta: a.theta.iter().zip(&b.theta).map(|(&p, &q)| lerp(p, q)).collect(),
        };
        // interpolated frames may dip into the ground: lift each one separately,
        // with 1 nm slack so rounding never leaves a point below zero
        let low = chain.min_point_height(&frame.pose(), &frame.theta)?;
        if low < 0.0 {
            frame.p[2] += -low + 1e-9;
        }
        frames.push(frame);
    }
    Ok(MotionTrajectory { fps: params.fps, joint_names: chain.joint_names(), frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::ground_offset;
    use approx::assert_abs_diff_eq;

    #[test]
    fn getup_starts_lying() {
        let chain = KinematicChain::planar5();
        let tr = gen_motion(MotionKind::GetUp2d, &chain, &GenParams::default()).unwrap();
        assert_abs_diff_eq!(tr.frames[0].q.planar_pitch(), FRAC_PI_2, epsilon = 1e-12);
        assert_eq!(tr.len(), 200);
        assert_eq!(tr.joint_count(), chain.num_joints());
    }

    #[test]
    fn stand_reach_base_is_constant() {
        let chain = KinematicChain::planar5();
        let tr = gen_motion(MotionKind::StandReach, &chain, &GenParams::default()).unwrap();
        let first = tr.frames[0].pose();
        assert!(tr.frames.iter().all(|f| f.pose() == first));
        assert!(tr.frames.iter().any(|f| f.theta != tr.frames[0].theta));
    }

    #[test]
    fn generated_motions_clear_the_ground() {
        let chain = KinematicChain::planar5();
        for kind in MotionKind::ALL {
            for duration in [1.0, 2.5, 4.0] {
                let tr = gen_motion(kind, &chain, &GenParams { duration: Some(duration), fps: 50.0 }).unwrap();
                assert_eq!(ground_offset(&tr, &chain).unwrap(), 0.0, "{kind}");
                assert_eq!(tr.len(), (duration * 50.0) as usize);
                // no frame dips below: exhaustive FK scan
                for f in &tr.frames {
                    assert!(chain.min_point_height(&f.pose(), &f.theta).unwrap() >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn unknown_kind() {
        assert!("backflip".parse::<MotionKind>().is_err());
        assert_eq!("getup-2d".parse::<MotionKind>().unwrap(), MotionKind::GetUp2d);
    }

    #[test]
    fn generation_is_deterministic() {
        let chain = KinematicChain::planar5();
        let a = gen_motion(MotionKind::Crouch, &chain, &GenParams::default()).unwrap();
        let b = gen_motion(MotionKind::Crouch, &chain, &GenParams::default()).unwrap();
        assert_eq!(crate::motion::save_motion(&a), crate::motion::save_motion(&b));
    }
}
