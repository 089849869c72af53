use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ContactConfig, DomainRandRanges, EnvConfig};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::kinematics::KinematicChain;

/// One per-episode draw of the randomized dynamics parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainRand {
    pub mass_scale: f64,
    /// Shift of the centre of mass along the base x-axis, metres.
    pub com_offset: f64,
    pub kp_scale: f64,
    pub kd_scale: f64,
    /// Seconds.
    pub motor_delay: f64,
}

impl DomainRand {
    pub const IDENTITY: DomainRand = DomainRand { mass_scale: 1.0, com_offset: 0.0, kp_scale: 1.0, kd_scale: 1.0, motor_delay: 0.0 };

    pub fn sample<R: Rng + ?Sized>(ranges: &DomainRandRanges, rng: &mut R) -> Self {
        let mut draw = |r: [f64; 2]| if r[0] < r[1] { rng.random_range(r[0]..=r[1]) } else { r[0] };
        DomainRand {
            mass_scale: draw(ranges.mass_scale),
            com_offset: draw(ranges.com_offset),
            kp_scale: draw(ranges.kp_scale),
            kd_scale: draw(ranges.kd_scale),
            motor_delay: draw(ranges.motor_delay),
        }
    }

    /// Nearest sample inside `ranges`.
    pub fn clamped(&self, ranges: &DomainRandRanges) -> DomainRand {
        DomainRand {
            mass_scale: self.mass_scale.clamp(ranges.mass_scale[0], ranges.mass_scale[1]),
            com_offset: self.com_offset.clamp(ranges.com_offset[0], ranges.com_offset[1]),
            kp_scale: self.kp_scale.clamp(ranges.kp_scale[0], ranges.kp_scale[1]),
            kd_scale: self.kd_scale.clamp(ranges.kd_scale[0], ranges.kd_scale[1]),
            motor_delay: self.motor_delay.clamp(ranges.motor_delay[0], ranges.motor_delay[1]),
        }
    }

    pub fn within(&self, ranges: &DomainRandRanges) -> bool {
        let inside = |v: f64, r: [f64; 2]| r[0] <= v && v <= r[1];
        inside(self.mass_scale, ranges.mass_scale)
            && inside(self.com_offset, ranges.com_offset)
            && inside(self.kp_scale, ranges.kp_scale)
            && inside(self.kd_scale, ranges.kd_scale)
            && inside(self.motor_delay, ranges.motor_delay)
    }
}

/// Concrete dynamics of one randomized robot instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DynParams {
    pub link_masses: Vec<f64>,
    pub total_mass: f64,
    pub base_inertia: f64,
    pub com_offset: f64,
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
    pub joint_inertia: Vec<f64>,
    pub joint_friction: f64,
    pub torque_limits: Vec<f64>,
    pub delay_substeps: usize,
}

pub fn apply_domain_rand(chain: &KinematicChain, cfg: &EnvConfig, sample: &DomainRand) -> Result<DynParams> {
    if !sample.within(&cfg.domain_rand) {
        return Err(Error::Config(format!("domain randomization sample {sample:?} outside configured ranges")));
    }
    let s = sample.mass_scale;
    let joint_inertia = if cfg.joint_inertia.is_empty() {
        chain.downstream_mass().iter().map(|m| (m * cfg.joint_inertia_factor).max(1e-4) * s).collect()
    } else {
        cfg.joint_inertia.iter().map(|i| i * s).collect()
    };
    let link_masses: Vec<f64> = chain.links().iter().map(|l| l.mass * s).collect();
    Ok(DynParams {
        total_mass: link_masses.iter().sum(),
        link_masses,
        base_inertia: cfg.base_inertia * s,
        com_offset: sample.com_offset,
        kp: cfg.kp.iter().map(|k| k * sample.kp_scale).collect(),
        kd: cfg.kd.iter().map(|k| k * sample.kd_scale).collect(),
        joint_inertia,
        joint_friction: cfg.joint_friction,
        torque_limits: chain.torque_limits(),
        delay_substeps: (sample.motor_delay / cfg.dt_sim()).round() as usize,
    })
}

/// `clamp(kp·(target − θ) − kd·θ̇, ±τ_max)` per joint.
pub fn pd_torque(kp: &[f64], kd: &[f64], target: &[f64], theta: &[f64], theta_dot: &[f64], tau_max: &[f64]) -> Vec<f64> {
    (0..theta.len())
        .map(|j| (kp[j] * (target[j] - theta[j]) - kd[j] * theta_dot[j]).clamp(-tau_max[j], tau_max[j]))
        .collect()
}

/// Penalty ground force on a point at `pos` moving with `vel` (ground plane z = 0).
pub fn contact_force(pos: Vec3, vel: Vec3, cfg: &ContactConfig) -> Vec3 {
    let depth = (-pos[2]).max(0.0);
    if depth == 0.0 {
        return [0.0; 3];
    }
    let fz = (cfg.k_n * depth - cfg.c_n * vel[2]).max(0.0);
    let bound = cfg.mu * fz;
    let fx = -(cfg.k_t * vel[0]).clamp(-bound, bound);
    [fx, 0.0, fz]
}
