//! Motion references, keyframe commands, grouped rewards and termination.

pub mod command;
pub mod generate;
pub mod reward;
pub mod termination;
pub mod trajectory;

pub use command::{build_command_sequence, frame_width, refresh_errors, CommandFrame, CommandSequence, Keyframe, RobotView};
pub use generate::{gen_motion, GenParams, MotionKind};
pub use reward::{psi, regularization_reward, safety_reward, task_reward, RewardConfig};
pub use termination::{check_termination, JointMode, TerminationCause, TerminationConfig};
pub use trajectory::{
    ground_offset, load_motion, load_motion_file, sample_keyframes, save_motion, MotionFrame, MotionTrajectory,
};

pub const GETUP_2D_JSON: &str = include_str!("../../assets/motions/getup-2d.json");
