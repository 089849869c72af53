use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose, Quat, Vec3};
use crate::kinematics::KinematicChain;

/// One stored reference frame: world base pose plus joint vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionFrame {
    pub p: Vec3,
    pub q: Quat,
    pub theta: Vec<f64>,
}

impl MotionFrame {
    pub fn pose(&self) -> Pose {
        Pose::new(self.p, self.q)
    }
}

/// Time-indexed shadowing reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionTrajectory {
    pub fps: f64,
    pub joint_names: Vec<String>,
    pub frames: Vec<MotionFrame>,
}

impl MotionTrajectory {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::schema("fps", format!("fps must be > 0, got {}", self.fps)));
        }
        let n = self.joint_names.len();
        for (i, f) in self.frames.iter().enumerate() {
            if f.theta.len() != n {
                return Err(Error::schema(
                    format!("frames[{i}].theta"),
                    format!("expected {n} joint values (one per joint name), got {}", f.theta.len()),
                ));
            }
            if f.p.iter().chain(&f.theta).any(|v| !v.is_finite()) {
                return Err(Error::schema(format!("frames[{i}]"), "non-finite value"));
            }
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Time of the last stored frame, seconds.
    pub fn duration(&self) -> f64 {
        if self.frames.is_empty() {
            0.0
        } else {
            (self.frames.len() - 1) as f64 / self.fps
        }
    }

    /// Reference evaluated at `t` (clamped to `[0, duration]`): linear in `p`
    /// and `theta`, shortest-arc spherical in `q`.
    pub fn sample(&self, t: f64) -> Result<MotionFrame> {
        if self.frames.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        let last = self.frames.len() - 1;
        let x = (t.max(0.0) * self.fps).min(last as f64);
        // snap to the grid so aligned queries return stored frames exactly
        let snapped = x.round();
        if (x - snapped).abs() < 1e-9 {
            return Ok(self.frames[snapped as usize].clone());
        }
        let i = x.floor() as usize;
        if i >= last {
            return Ok(self.frames[last].clone());
        }
        let a = &self.frames[i];
        let b = &self.frames[i + 1];
        let s = x - i as f64;
        let lerp = |u: f64, v: f64| u + s * (v - u);
        Ok(MotionFrame {
            p: [lerp(a.p[0], b.p[0]), lerp(a.p[1], b.p[1]), lerp(a.p[2], b.p[2])],
            q: a.q.slerp(&b.q, s),
            theta: a.theta.iter().zip(&b.theta).map(|(&u, &v)| lerp(u, v)).collect(),
        })
    }

    /// Copy with `h` added to every frame's base height.
    pub fn with_height_offset(&self, h: f64) -> Self {
        let mut out = self.clone();
        for f in &mut out.frames {
            f.p[2] += h;
        }
        out
    }

    pub fn check_chain(&self, chain: &KinematicChain) -> Result<()> {
        if self.joint_count() != chain.num_joints() {
            return Err(Error::dim("motion joint count vs chain", chain.num_joints(), self.joint_count()));
        }
        Ok(())
    }
}

/// Reference frames at `t + k·t_int` for `k = 1..=count`, clamped to the
/// trajectory duration. Returns the frames and their (clamped) motion times,
/// which are non-decreasing; frames past the end repeat the final frame.
pub fn sample_keyframes(
    traj: &MotionTrajectory,
    t: f64,
    t_int: f64,
    count: usize,
) -> Result<(Vec<MotionFrame>, Vec<f64>)> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if !(t_int > 0.0) {
        return Err(Error::Config(format!("keyframe interval must be > 0, got {t_int}")));
    }
    let d = traj.duration();
    let mut frames = Vec::with_capacity(count);
    let mut times = Vec::with_capacity(count);
    for k in 1..=count {
        let tk = (t.max(0.0) + k as f64 * t_int).min(d);
        frames.push(traj.sample(tk)?);
        times.push(tk);
    }
    Ok((frames, times))
}

/// Smallest `h >= 0` lifting every collision point of every frame to `z >= 0`.
pub fn ground_offset(traj: &MotionTrajectory, chain: &KinematicChain) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    traj.check_chain(chain)?;
    let mut lowest = f64::INFINITY;
    for f in &traj.frames {
        lowest = lowest.min(chain.min_point_height(&f.pose(), &f.theta)?);
    }
    Ok((-lowest).max(0.0))
}

pub fn load_motion(text: &str) -> Result<MotionTrajectory> {
    let traj: MotionTrajectory = serde_json::from_str(text)
        .map_err(|e| Error::schema(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    traj.validate()?;
    Ok(traj)
}

pub fn save_motion(traj: &MotionTrajectory) -> String {
    serde_json::to_string(traj).expect("motion trajectory serializes")
}

pub fn load_motion_file(path: &std::path::Path) -> Result<MotionTrajectory> {
    load_motion(&std::fs::read_to_string(path)?)
}
