//! Keyframe motion shadowing for a planar humanoid analog.
//!
//! The crate covers the full stack: quaternion geometry ([`geom`]), kinematic
//! chains ([`kinematics`]), reference motions with keyframe commands and
//! grouped rewards ([`motion`]), a penalty-contact planar simulator
//! ([`sim2d`]), a small reverse-mode autodiff and network library ([`nn`]),
//! and multi-critic PPO with advantage mixing ([`rl`]).

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod geom;
pub mod kinematics;
pub mod motion;
pub mod nn;
pub mod par;
pub mod plot;
pub mod rl;
pub mod sim2d;

pub use error::{Error, Result};
