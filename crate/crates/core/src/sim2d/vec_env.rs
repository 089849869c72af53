use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::env::{EnvShared, Observation, ShadowEnv, StepResult};
use crate::error::{Error, Result};
use crate::motion::TerminationCause;
use crate::par::Exec;

/// Summary of one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub length: usize,
    pub success: bool,
    pub cause: Option<TerminationCause>,
    pub diverged: bool,
    pub keyframes_consumed: usize,
    /// Summed task, regularization and safety rewards.
    pub returns: [f64; 3],
    /// Mean over steps of `max_j |θ̈_j|`.
    pub mean_max_joint_acc: f64,
}

#[derive(Debug, Clone, Default)]
struct Accum {
    length: usize,
    returns: [f64; 3],
    acc_sum: f64,
}

/// Result of stepping one member of a [`VecEnv`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub result: StepResult,
    /// Observation before any auto-reset; present when the episode was truncated.
    pub final_obs: Option<Observation>,
    pub episode: Option<EpisodeStats>,
}

/// A batch of environments stepped together, each on its own RNG stream.
/// Finished episodes are reset automatically.
#[derive(Debug, Clone)]
pub struct VecEnv {
    envs: Vec<ShadowEnv>,
    accum: Vec<Accum>,
    exec: Exec,
    shared: Arc<EnvShared>,
}

impl VecEnv {
    pub fn new(shared: Arc<EnvShared>, n: usize, seed: u64, exec: Exec) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("environment count must be >= 1".into()));
        }
        let envs = exec
            .map_range(n, |i| ShadowEnv::new(Arc::clone(&shared), seed, i as u64))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(VecEnv { accum: vec![Accum::default(); n], envs, exec, shared })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn shared(&self) -> &Arc<EnvShared> {
        &self.shared
    }

    pub fn envs(&self) -> &[ShadowEnv] {
        &self.envs
    }

    pub fn envs_mut(&mut self) -> &mut [ShadowEnv] {
        &mut self.envs
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.exec = exec;
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.exec.map(&self.envs, |_, e| e.observation())
    }

    /// Steps every environment with its row of `actions`.
    pub fn step(&mut self, actions: &[Vec<f64>]) -> Result<Vec<EnvStep>> {
        if actions.len() != self.envs.len() {
            return Err(Error::dim("vec env action batch", self.envs.len(), actions.len()));
        }
        let mut work: Vec<(&mut ShadowEnv, &mut Accum, Option<Result<EnvStep>>)> =
            self.envs.iter_mut().zip(self.accum.iter_mut()).map(|(e, a)| (e, a, None)).collect();
        self.exec.for_each_mut(&mut work, |i, (env, acc, out)| {
            *out = Some(step_one(env, acc, &actions[i]));
        });
        work.into_iter().map(|(_, _, out)| out.expect("every env stepped")).collect()
    }
}

fn step_one(env: &mut ShadowEnv, acc: &mut Accum, action: &[f64]) -> Result<EnvStep> {
    let result = env.step(action)?;
    acc.length += 1;
    for (r, x) in acc.returns.iter_mut().zip(result.rewards) {
        *r += x;
    }
    acc.acc_sum += result.info.max_joint_acc;
    if !result.done() {
        return Ok(EnvStep { result, final_obs: None, episode: None });
    }
    let episode = EpisodeStats {
        length: acc.length,
        success: result.success(),
        cause: result.info.cause,
        diverged: result.info.diverged,
        keyframes_consumed: env.state().consumed,
        returns: acc.returns,
        mean_max_joint_acc: acc.acc_sum / acc.length as f64,
    };
    let final_obs = result.truncated.then(|| env.observation());
    *acc = Accum::default();
    env.reset()?;
    Ok(EnvStep { result, final_obs, episode: Some(episode) })
}
