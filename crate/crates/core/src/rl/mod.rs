//! Multi-critic PPO: one critic per reward group, GAE per stream, mixed
//! normalized advantages for the actor, and a single-critic baseline on the
//! weighted reward sum.

pub mod advantage;
pub mod agent;
pub mod buffer;
pub mod config;
pub mod eval;
pub mod metrics;
pub mod train;

pub use advantage::{clipped_surrogate, compute_gae, critic_loss, mean_std, mix_advantages, single_critic_reward, value_targets};
pub use agent::{advantages, ppo_update, Advantages, Agent, UpdateStats};
pub use buffer::RolloutBuffer;
pub use config::{adapt_lr, CriticMode, PPOConfig, ValueTarget, LR_MAX, LR_MIN};
pub use eval::{evaluate, keyframe_acc_ratio, replay, EvalEpisode, EvalReport, ReplayFrame, TracePoint, REACH_WINDOW};
pub use metrics::{parse_metrics, write_header, write_row, MetricsRow, HEADER, SCHEMA_LINE};
pub use train::{env_dims, obs_batch, RolloutStats, Trainer, SUCCESS_WINDOW};
