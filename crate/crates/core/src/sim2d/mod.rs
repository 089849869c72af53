//! Planar (x–z–pitch) articulated robot with penalty ground contact and PD
//! joint actuation.
//!
//! Dynamics are decoupled: each joint is a damped double integrator driven by
//! its PD torque, and the base is one rigid body forced by gravity and ground
//! contact at the configuration-dependent centre of mass. Joint reaction on the
//! base is not modelled. Integration is drift-kick-drift (position Verlet) at
//! `dt_policy / substeps`.

pub mod config;
pub mod dynamics;
pub mod env;
pub mod vec_env;

pub use config::{ContactConfig, DomainRandRanges, EnvConfig};
pub use dynamics::{apply_domain_rand, contact_force, pd_torque, DomainRand, DynParams};
pub use env::{observe, proprio_frame, EnvShared, ObsHistory, Observation, ShadowEnv, SimState, StepInfo, StepResult};
pub use vec_env::{EnvStep, EpisodeStats, VecEnv};
