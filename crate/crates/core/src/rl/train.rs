use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::agent::{ppo_update, Agent, UpdateStats};
use super::buffer::RolloutBuffer;
use super::config::{CriticMode, PPOConfig};
use super::metrics::MetricsRow;
use crate::error::Result;
use crate::nn::{gaussian_log_prob, NetDims, NetworkConfig, ObsBatch, ObsRef};
use crate::par::Exec;
use crate::sim2d::{EnvShared, EpisodeStats, Observation, VecEnv};

/// Finished episodes kept for the success-rate estimate.
pub const SUCCESS_WINDOW: usize = 100;

const ACTION_STREAM: u64 = 1 << 40;
const SHUFFLE_STREAM: u64 = (1 << 40) + 1;

/// Network widths for an environment.
pub fn env_dims(shared: &EnvShared) -> NetDims {
    NetDims { obs: shared.obs_width(), token: shared.token_width(), actions: shared.num_joints() }
}

pub fn obs_batch(obs: &[Observation], dims: &NetDims, max_tokens: usize) -> Result<ObsBatch> {
    let refs: Vec<ObsRef<'_>> = obs.iter().map(|o| ObsRef { proprio: &o.proprio, tokens: &o.tokens, n_tokens: o.n_tokens }).collect();
    ObsBatch::new(&refs, dims, max_tokens)
}

/// Per-rollout averages reported in the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RolloutStats {
    pub mean_rewards: [f64; 3],
    pub max_joint_acc: f64,
    pub episodes: usize,
}

/// Collect-then-update loop over a [`VecEnv`].
#[derive(Debug, Clone)]
pub struct Trainer {
    pub agent: Agent,
    pub ppo: PPOConfig,
    pub envs: VecEnv,
    pub exec: Exec,
    pub action_rng: ChaCha8Rng,
    pub shuffle_rng: ChaCha8Rng,
    pub iteration: usize,
    pub env_steps: u64,
    pub window: VecDeque<EpisodeStats>,
    obs: Vec<Observation>,
}

impl Trainer {
    pub fn new(shared: Arc<EnvShared>, net: &NetworkConfig, ppo: &PPOConfig, mode: CriticMode, seed: u64, exec: Exec) -> Result<Self> {
        ppo.validate()?;
        let agent = Agent::new(net, env_dims(&shared), ppo, mode, seed)?;
        let envs = VecEnv::new(shared, ppo.num_envs, seed, exec)?;
        let obs = envs.observations();
        let mut action_rng = ChaCha8Rng::seed_from_u64(seed);
        action_rng.set_stream(ACTION_STREAM);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
        shuffle_rng.set_stream(SHUFFLE_STREAM);
        Ok(Trainer { agent, ppo: ppo.clone(), envs, exec, action_rng, shuffle_rng, iteration: 0, env_steps: 0, window: VecDeque::new(), obs })
    }

    pub fn success_rate(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        self.window.iter().filter(|e| e.success).count() as f64 / self.window.len() as f64
    }

    pub fn mean_episode_length(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        self.window.iter().map(|e| e.length as f64).sum::<f64>() / self.window.len() as f64
    }

    /// Runs `ppo.rollout` steps of every environment with sampled actions.
    pub fn collect(&mut self) -> Result<(RolloutBuffer, RolloutStats)> {
        let shared = Arc::clone(self.envs.shared());
        let dims = env_dims(&shared);
        let (n, na) = (self.envs.len(), dims.actions);
        let chunk = self.ppo.chunk;
        let mut buf = RolloutBuffer::new(n, shared.max_tokens(), self.agent.critics.len());
        let mut stats = RolloutStats::default();
        // steps of the previous iteration waiting for V(s_{t+1})
        let mut pending: Vec<bool> = Vec::new();
        for _ in 0..self.ppo.rollout {
            let batch = obs_batch(&self.obs, &dims, shared.max_tokens())?;
            let (mean, std) = self.agent.act(&batch, chunk, self.exec)?;
            let values = self.agent.values(&batch, chunk, self.exec)?;
            fill_pending(&mut buf, &pending, &values);

            let mut actions = Vec::with_capacity(n);
            for i in 0..n {
                let m = &mean[i * na..(i + 1) * na];
                let a: Vec<f64> = m.iter().zip(&std).map(|(m, s)| m + s * self.action_rng.sample::<f64, _>(StandardNormal)).collect();
                buf.log_probs.push(gaussian_log_prob(m, &std, &a));
                buf.actions.extend_from_slice(&a);
                actions.push(a);
            }
            buf.means.extend_from_slice(&mean);
            buf.std.clone_from(&std);
            for (k, v) in values.into_iter().enumerate() {
                buf.values[k].extend(v);
            }
            buf.obs.append(&mut self.obs);

            let steps = self.envs.step(&actions)?;
            let mut final_obs = Vec::new();
            let mut final_idx = Vec::new();
            pending = vec![false; n];
            for (i, s) in steps.into_iter().enumerate() {
                let r = &s.result;
                buf.rewards.push(r.rewards);
                buf.terminated.push(r.terminated);
                buf.truncated.push(r.truncated);
                for (acc, x) in stats.mean_rewards.iter_mut().zip(r.rewards) {
                    *acc += x;
                }
                stats.max_joint_acc += r.info.max_joint_acc;
                for nv in &mut buf.next_values {
                    nv.push(0.0);
                }
                if let Some(fo) = s.final_obs {
                    final_idx.push(buf.len() - n + i);
                    final_obs.push(fo);
                } else if !r.terminated {
                    pending[i] = true;
                }
                if let Some(ep) = s.episode {
                    stats.episodes += 1;
                    self.window.push_back(ep);
                    if self.window.len() > SUCCESS_WINDOW {
                        self.window.pop_front();
                    }
                }
            }
            if !final_obs.is_empty() {
                let fb = obs_batch(&final_obs, &dims, shared.max_tokens())?;
                let fv = self.agent.values(&fb, chunk, self.exec)?;
                for (k, v) in fv.iter().enumerate() {
                    for (j, &idx) in final_idx.iter().enumerate() {
                        buf.next_values[k][idx] = v[j];
                    }
                }
            }
            self.obs = self.envs.observations();
        }
        let batch = obs_batch(&self.obs, &dims, shared.max_tokens())?;
        let values = self.agent.values(&batch, chunk, self.exec)?;
        fill_pending(&mut buf, &pending, &values);

        let steps = buf.len() as f64;
        stats.mean_rewards.iter_mut().for_each(|r| *r /= steps);
        stats.max_joint_acc /= steps;
        self.env_steps += buf.len() as u64;
        buf.validate(na)?;
        Ok((buf, stats))
    }

    /// One collect + update iteration.
    pub fn iterate(&mut self) -> Result<MetricsRow> {
        let (buf, rs) = self.collect()?;
        let us: UpdateStats = ppo_update(&mut self.agent, &buf, &self.ppo, &mut self.shuffle_rng, self.exec)?;
        self.iteration += 1;
        Ok(MetricsRow {
            iter: self.iteration,
            env_steps: self.env_steps,
            success_rate: self.success_rate(),
            mean_ep_len: self.mean_episode_length(),
            mean_r_task: rs.mean_rewards[0],
            mean_r_reg: rs.mean_rewards[1],
            mean_r_safety: rs.mean_rewards[2],
            loss_surrogate: us.loss_surrogate,
            loss_v1: us.loss_values[0],
            loss_v2: us.loss_values[1],
            loss_v3: us.loss_values[2],
            approx_kl: us.approx_kl,
            lr: us.lr,
            max_joint_acc: rs.max_joint_acc,
        })
    }
}

/// Writes the critics' values of the current observations into the previous
/// step's bootstrap slots.
fn fill_pending(buf: &mut RolloutBuffer, pending: &[bool], values: &[Vec<f64>]) {
    if pending.is_empty() {
        return;
    }
    let base = buf.len() - pending.len();
    for (i, _) in pending.iter().enumerate().filter(|(_, p)| **p) {
        for (k, v) in values.iter().enumerate() {
            buf.next_values[k][base + i] = v[i];
        }
    }
}
