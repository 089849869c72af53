use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::KinematicChain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    /// Normal stiffness, N/m.
    pub k_n: f64,
    /// Normal damping, N·s/m.
    pub c_n: f64,
    /// Tangential viscous gain, N·s/m.
    pub k_t: f64,
    /// Coulomb friction coefficient.
    pub mu: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self { k_n: 5000.0, c_n: 200.0, k_t: 200.0, mu: 0.8 }
    }
}

/// Closed intervals domain-randomization samples are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainRandRanges {
    pub mass_scale: [f64; 2],
    pub com_offset: [f64; 2],
    pub kp_scale: [f64; 2],
    pub kd_scale: [f64; 2],
    /// Seconds.
    pub motor_delay: [f64; 2],
}

impl Default for DomainRandRanges {
    fn default() -> Self {
        Self {
            mass_scale: [0.8, 1.2],
            com_offset: [-0.02, 0.02],
            kp_scale: [0.9, 1.1],
            kd_scale: [0.9, 1.1],
            motor_delay: [0.0, 0.03],
        }
    }
}

impl DomainRandRanges {
    /// Degenerate ranges: every sample is the nominal robot.
    pub fn none() -> Self {
        Self {
            mass_scale: [1.0, 1.0],
            com_offset: [0.0, 0.0],
            kp_scale: [1.0, 1.0],
            kd_scale: [1.0, 1.0],
            motor_delay: [0.0, 0.0],
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("env.domain_rand.mass_scale", self.mass_scale),
            ("env.domain_rand.com_offset", self.com_offset),
            ("env.domain_rand.kp_scale", self.kp_scale),
            ("env.domain_rand.kd_scale", self.kd_scale),
            ("env.domain_rand.motor_delay", self.motor_delay),
        ] {
            if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::schema(name, format!("range {r:?} must satisfy lo <= hi")));
            }
        }
        if self.mass_scale[0] <= 0.0 || self.motor_delay[0] < 0.0 {
            return Err(Error::schema("env.domain_rand", "mass scale must be > 0 and delay >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Bundled chain name or path to a chain file.
    pub chain: String,
    pub dt_policy: f64,
    pub substeps: usize,
    pub gravity: f64,
    /// Per-joint PD stiffness, in chain joint order.
    pub kp: Vec<f64>,
    /// Per-joint PD damping, in chain joint order.
    pub kd: Vec<f64>,
    /// Per-joint effective inertia; empty derives `joint_inertia_factor · downstream mass`.
    pub joint_inertia: Vec<f64>,
    /// m², multiplies the downstream link mass.
    pub joint_inertia_factor: f64,
    /// Viscous joint friction, N·m·s/rad, applied to every joint.
    pub joint_friction: f64,
    /// Base pitch inertia about the centre of mass at nominal mass, kg·m².
    pub base_inertia: f64,
    pub contact: ContactConfig,
    pub spawn_height: f64,
    /// Reset frames are drawn from this fraction range of the motion duration.
    pub init_ratio: [f64; 2],
    /// Keyframe spacing range, seconds; drawn once per episode.
    pub t_int_range: [f64; 2],
    pub keyframes: usize,
    /// Proprioception frames stacked in the observation.
    pub history: usize,
    pub action_scale: f64,
    pub domain_rand: DomainRandRanges,
}

impl Default for EnvConfig {
    fn default() -> Self {
        // planar5 joint order: torso, l_hip, l_knee, r_hip, r_knee, l_arm, r_arm
        Self {
            chain: "planar5".into(),
            dt_policy: 0.02,
            substeps: 4,
            gravity: 9.81,
            kp: vec![60.0, 90.0, 140.0, 90.0, 140.0, 25.0, 25.0],
            kd: vec![2.5, 2.0, 2.5, 2.0, 2.5, 1.0, 1.0],
            joint_inertia: Vec::new(),
            joint_inertia_factor: 0.1,
            joint_friction: 0.1,
            base_inertia: 2.0,
            contact: ContactConfig::default(),
            spawn_height: 0.04,
            init_ratio: [0.0, 0.6],
            t_int_range: [0.1, 0.3],
            keyframes: 5,
            history: 5,
            action_scale: 0.5,
            domain_rand: DomainRandRanges::default(),
        }
    }
}

impl EnvConfig {
    pub fn dt_sim(&self) -> f64 {
        self.dt_policy / self.substeps as f64
    }

    pub fn validate(&self, chain: &KinematicChain) -> Result<()> {
        let n = chain.num_joints();
        if !(self.dt_policy > 0.0) || self.substeps == 0 {
            return Err(Error::schema("env.dt_policy", "policy period and substeps must be > 0"));
        }
        if self.kp.len() != n || self.kd.len() != n {
            return Err(Error::schema("env.kp", format!("need {n} gains for chain `{}`, got kp={} kd={}", self.chain, self.kp.len(), self.kd.len())));
        }
        if !self.joint_inertia.is_empty() && self.joint_inertia.len() != n {
            return Err(Error::schema("env.joint_inertia", format!("need {n} values or none")));
        }
        if self.joint_inertia.iter().any(|&i| !(i > 0.0)) || !(self.joint_inertia_factor > 0.0) {
            return Err(Error::schema("env.joint_inertia", "inertia must be > 0"));
        }
        if !(self.contact.k_n > 0.0) || self.contact.c_n < 0.0 || self.contact.k_t < 0.0 || self.contact.mu < 0.0 {
            return Err(Error::schema("env.contact", "stiffness must be > 0 and damping/friction >= 0"));
        }
        if !(self.base_inertia > 0.0) || !(self.gravity >= 0.0) {
            return Err(Error::schema("env.base_inertia", "base inertia must be > 0 and gravity >= 0"));
        }
        let [lo, hi] = self.init_ratio;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::schema("env.init_ratio", "ratio range must lie in [0, 1]"));
        }
        let [lo, hi] = self.t_int_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::schema("env.t_int_range", "keyframe interval range must be positive"));
        }
        if self.keyframes == 0 || self.history == 0 {
            return Err(Error::schema("env.keyframes", "keyframe count and history length must be >= 1"));
        }
        self.domain_rand.validate()
    }

    pub fn load_chain(&self) -> Result<KinematicChain> {
        KinematicChain::load(&self.chain)
    }
}
