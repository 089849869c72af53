//! Keyframe motion commands as seen by the policy.
//!
//! Each keyframe becomes one token: base target re-expressed in the robot base
//! frame at refresh time, target joints, target link positions, their errors
//! against the current state, and two clocks (time since refresh, time left to
//! reach). A state-target token describing the current state is always appended.

use serde::{Deserialize, Serialize};

use super::trajectory::{sample_keyframes, MotionTrajectory};
use crate::error::Result;
use crate::geom::{self, relative_pose, AxisAngle, Pose, Vec3};
use crate::kinematics::KinematicChain;

/// Minimal robot state needed to express commands.
#[derive(Debug, Clone, Copy)]
pub struct RobotView<'a> {
    pub base: Pose,
    pub theta: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandFrame {
    pub p_b: Vec3,
    pub alpha_b: AxisAngle,
    pub theta_target: Vec<f64>,
    pub links_target: Vec<Vec3>,
    pub joint_err: Vec<f64>,
    pub link_err: Vec<Vec3>,
    pub t_passed: f64,
    pub t_left: f64,
    pub is_state_target: bool,
}

/// World-frame reference behind a keyframe, kept for reward and termination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub motion_time: f64,
    pub reach_time: f64,
    pub world_ref: Pose,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandSequence {
    /// Keyframe tokens in reach order followed by exactly one state-target.
    pub frames: Vec<CommandFrame>,
    pub keyframes: Vec<Keyframe>,
    pub t_refresh: f64,
}

/// Width of one token for `n_joints` joints and `n_targets` target links.
pub fn frame_width(n_joints: usize, n_targets: usize) -> usize {
    3 + 3 + n_joints + 3 * n_targets + n_joints + 3 * n_targets + 2
}

impl CommandFrame {
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(frame_width(self.theta_target.len(), self.links_target.len()));
        self.write_features(&mut out);
        out
    }

    pub fn write_features(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.p_b);
        out.extend_from_slice(&self.alpha_b.v);
        out.extend_from_slice(&self.theta_target);
        self.links_target.iter().for_each(|l| out.extend_from_slice(l));
        out.extend_from_slice(&self.joint_err);
        self.link_err.iter().for_each(|l| out.extend_from_slice(l));
        out.push(self.t_passed);
        out.push(self.t_left);
    }

    fn state_target(links: &[Vec3], theta: &[f64], t_passed: f64) -> Self {
        CommandFrame {
            p_b: [0.0; 3],
            alpha_b: AxisAngle::default(),
            theta_target: theta.to_vec(),
            links_target: links.to_vec(),
            joint_err: vec![0.0; theta.len()],
            link_err: vec![[0.0; 3]; links.len()],
            t_passed,
            t_left: 0.0,
            is_state_target: true,
        }
    }
}

impl CommandSequence {
    pub fn reach_times(&self) -> Vec<f64> {
        self.keyframes.iter().map(|k| k.reach_time).collect()
    }

    pub fn num_keyframes(&self) -> usize {
        self.keyframes.len()
    }

    pub fn state_target_index(&self) -> usize {
        self.frames.len() - 1
    }

    /// `t_left` of every non-state-target token.
    pub fn t_lefts(&self) -> Vec<f64> {
        self.frames.iter().filter(|f| !f.is_state_target).map(|f| f.t_left).collect()
    }

    pub fn is_exhausted(&self) -> bool {
        self.keyframes.is_empty()
    }
}

/// Builds a fresh command sequence at motion time `motion_time` / episode clock `now`.
///
/// Keyframes past the end of the trajectory collapse onto the final frame; only
/// strictly later motion times are kept, so reach times strictly increase and a
/// sequence refreshed at the final frame holds no keyframes.
pub fn build_command_sequence(
    traj: &MotionTrajectory,
    chain: &KinematicChain,
    robot: RobotView<'_>,
    motion_time: f64,
    now: f64,
    t_int: f64,
    count: usize,
) -> Result<CommandSequence> {
    traj.check_chain(chain)?;
    let (frames, times) = sample_keyframes(traj, motion_time, t_int, count)?;
    let current_links = chain.link_positions_in_base(robot.theta)?;

    let mut keyframes = Vec::with_capacity(count);
    let mut last = motion_time;
    for (f, tk) in frames.into_iter().zip(times) {
        if tk <= last {
            continue;
        }
        last = tk;
        keyframes.push(Keyframe { motion_time: tk, reach_time: now + (tk - motion_time), world_ref: f.pose(), theta: f.theta });
    }

    let mut tokens = Vec::with_capacity(keyframes.len() + 1);
    for k in &keyframes {
        let rel = relative_pose(&robot.base, &k.world_ref);
        let links_target = chain.targets_in_base_unchecked(&k.theta);
        tokens.push(CommandFrame {
            p_b: rel.p,
            alpha_b: rel.q.to_axis_angle(),
            joint_err: k.theta.iter().zip(robot.theta).map(|(a, b)| a - b).collect(),
            link_err: links_target.iter().zip(&current_links).map(|(a, b)| geom::sub(*a, *b)).collect(),
            theta_target: k.theta.clone(),
            links_target,
            t_passed: 0.0,
            t_left: k.reach_time - now,
            is_state_target: false,
        });
    }
    tokens.push(CommandFrame::state_target(&current_links, robot.theta, 0.0));
    Ok(CommandSequence { frames: tokens, keyframes, t_refresh: now })
}

/// Updates errors and clocks from the current state; base targets stay frozen
/// at their refresh-time values.
pub fn refresh_errors(seq: &mut CommandSequence, chain: &KinematicChain, robot: RobotView<'_>, now: f64) {
    let current_links = chain.targets_in_base_unchecked(robot.theta);
    let t_passed = now - seq.t_refresh;
    for (tok, k) in seq.frames.iter_mut().zip(&seq.keyframes) {
        for ((e, a), b) in tok.joint_err.iter_mut().zip(&tok.theta_target).zip(robot.theta) {
            *e = a - b;
        }
        for ((e, a), b) in tok.link_err.iter_mut().zip(&tok.links_target).zip(&current_links) {
            *e = geom::sub(*a, *b);
        }
        tok.t_passed = t_passed;
        tok.t_left = k.reach_time - now;
    }
    let last = seq.frames.len() - 1;
    seq.frames[last] = CommandFrame::state_target(&current_links, robot.theta, t_passed);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Quat;
    use crate::motion::trajectory::MotionFrame;
    use approx::assert_abs_diff_eq;

    fn still(chain: &KinematicChain, pose: Pose, theta: Vec<f64>, n: usize) -> MotionTrajectory {
        MotionTrajectory {
            fps: 50.0,
            joint_names: chain.joint_names(),
            frames: vec![MotionFrame { p: pose.p, q: pose.q, theta }; n],
        }
    }

    #[test]
    fn robot_at_reference_gives_zero_targets() {
        let chain = KinematicChain::planar5();
        let pose = Pose::new([0.2, 0.0, 0.8], Quat::rot_y(0.3));
        let theta = vec![0.1, -0.2, 0.4, -0.1, 0.3, 0.2, -0.5];
        let tr = still(&chain, pose, theta.clone(), 100);
        let seq = build_command_sequence(&tr, &chain, RobotView { base: pose, theta: &theta }, 0.0, 0.0, 0.1, 5).unwrap();
        assert_eq!(seq.frames.len(), 6);
        assert_eq!(seq.frames.iter().filter(|f| f.is_state_target).count(), 1);
        assert!(seq.frames[5].is_state_target);
        for f in &seq.frames {
            assert!(geom::norm(f.p_b) < 1e-15);
            assert!(f.alpha_b.angle() < 1e-15);
            assert!(f.joint_err.iter().all(|e| e.abs() < 1e-15));
            assert!(f.link_err.iter().all(|e| geom::norm(*e) < 1e-15));
            assert_eq!(f.features().len(), frame_width(7, 5));
        }
        assert_eq!(frame_width(7, 5), 3 + 3 + 7 + 15 + 7 + 15 + 2);
        let rt = seq.reach_times();
        assert!(rt.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn refresh_at_same_instant_is_idempotent() {
        let chain = KinematicChain::planar5();
        let tr = crate::motion::generate::gen_motion(crate::motion::MotionKind::GetUp2d, &chain, &Default::default()).unwrap();
        let theta = vec![0.3, -0.5, 0.9, -0.2, 0.4, 0.1, -0.3];
        let robot = RobotView { base: Pose::new([0.05, 0.0, 0.3], Quat::rot_y(0.7)), theta: &theta };
        let seq = build_command_sequence(&tr, &chain, robot, 0.4, 1.0, 0.13, 5).unwrap();
        let mut again = seq.clone();
        refresh_errors(&mut again, &chain, robot, 1.0);
        assert_eq!(again, seq);
    }

    #[test]
    fn refresh_tracks_fk_delta() {
        let chain = KinematicChain::planar5();
        let tr = crate::motion::generate::gen_motion(crate::motion::MotionKind::Crouch, &chain, &Default::default()).unwrap();
        let theta0 = chain.default_pose().to_vec();
        let base = Pose::new([0.0, 0.0, 0.8], Quat::IDENTITY);
        let mut seq = build_command_sequence(&tr, &chain, RobotView { base, theta: &theta0 }, 0.0, 0.0, 0.2, 5).unwrap();
        let before = seq.clone();
        let theta1 = vec![0.2, -0.4, 0.5, 0.1, 0.2, -0.6, 0.3];
        refresh_errors(&mut seq, &chain, RobotView { base, theta: &theta1 }, 0.06);
        let l0 = chain.link_positions_in_base(&theta0).unwrap();
        let l1 = chain.link_positions_in_base(&theta1).unwrap();
        for (a, b) in seq.frames.iter().zip(&before.frames).filter(|(a, _)| !a.is_state_target) {
            for k in 0..l0.len() {
                for c in 0..3 {
                    // error shifts by minus the FK displacement of each target link
                    assert_abs_diff_eq!(a.link_err[k][c] - b.link_err[k][c], -(l1[k][c] - l0[k][c]), epsilon = 1e-12);
                }
            }
            assert_eq!(a.p_b, b.p_b);
            assert_eq!(a.alpha_b, b.alpha_b);
            assert_abs_diff_eq!(a.t_passed, 0.06, epsilon = 1e-15);
            assert_abs_diff_eq!(a.t_left, b.t_left - 0.06, epsilon = 1e-15);
        }
        let st = seq.frames.last().unwrap();
        assert!(st.is_state_target && st.t_left == 0.0);
        assert!(st.joint_err.iter().all(|&e| e == 0.0));
        assert!(st.link_err.iter().all(|e| *e == [0.0; 3]));
    }

    #[test]
    fn refresh_at_end_has_no_keyframes() {
        let chain = KinematicChain::planar5();
        let theta = chain.default_pose().to_vec();
        let tr = still(&chain, Pose::IDENTITY, theta.clone(), 11);
        let d = tr.duration();
        let seq = build_command_sequence(&tr, &chain, RobotView { base: Pose::IDENTITY, theta: &theta }, d - 0.05, 3.0, 0.04, 5)
            .unwrap();
        // only one keyframe lands strictly before the clamp
        assert_eq!(seq.num_keyframes(), 2);
        assert_abs_diff_eq!(seq.keyframes[1].motion_time, d, epsilon = 1e-15);
        let seq = build_command_sequence(&tr, &chain, RobotView { base: Pose::IDENTITY, theta: &theta }, d, 3.0, 0.04, 5).unwrap();
        assert!(seq.is_exhausted());
        assert_eq!(seq.frames.len(), 1);
    }

    #[test]
    fn joint_dimension_mismatch() {
        let chain = KinematicChain::planar5();
        let tr = still(&KinematicChain::planar2(), Pose::IDENTITY, vec![0.0, 0.0], 5);
        let theta = vec![0.0; 7];
        assert!(build_command_sequence(&tr, &chain, RobotView { base: Pose::IDENTITY, theta: &theta }, 0.0, 0.0, 0.1, 5).is_err());
    }
}
