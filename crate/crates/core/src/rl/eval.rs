use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::agent::chunks;
use super::train::{env_dims, obs_batch};
use crate::error::{Error, Result};
use crate::motion::{CommandSequence, TerminationCause};
use crate::nn::PolicyNet;
use crate::par::Exec;
use crate::sim2d::{EnvShared, ShadowEnv, SimState};

/// Half-width, in policy steps, of the window around keyframe-reach steps.
pub const REACH_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub time: f64,
    pub max_joint_acc: f64,
    /// A keyframe was reached (consumed) on this step.
    pub keyframe_reached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub index: usize,
    pub length: usize,
    pub success: bool,
    pub cause: Option<TerminationCause>,
    pub diverged: bool,
    pub keyframes_consumed: usize,
    pub returns: [f64; 3],
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EvalEpisode>,
    pub success_rate: f64,
    pub mean_episode_length: f64,
    pub mean_max_joint_acc: f64,
    /// In-window over off-window mean of the per-step max joint acceleration.
    pub keyframe_acc_ratio: Option<f64>,
}

/// Mean of `max_joint_acc` within [`REACH_WINDOW`] steps of any keyframe
/// reach, divided by the mean over the remaining steps. `None` when either
/// set is empty or the off-window mean is zero.
pub fn keyframe_acc_ratio<'a>(traces: impl IntoIterator<Item = &'a [TracePoint]>) -> Option<f64> {
    let (mut sin, mut nin, mut sout, mut nout) = (0.0, 0usize, 0.0, 0usize);
    for tr in traces {
        let reach: Vec<usize> = tr.iter().enumerate().filter(|(_, p)| p.keyframe_reached).map(|(i, _)| i).collect();
        for (i, p) in tr.iter().enumerate() {
            if reach.iter().any(|&r| i.abs_diff(r) <= REACH_WINDOW) {
                sin += p.max_joint_acc;
                nin += 1;
            } else {
                sout += p.max_joint_acc;
                nout += 1;
            }
        }
    }
    if nin == 0 || nout == 0 || sout == 0.0 {
        return None;
    }
    Some((sin / nin as f64) / (sout / nout as f64))
}

/// Deterministic mean-action episodes; episode `i` runs on RNG stream `i` of `seed`.
pub fn evaluate(policy: &PolicyNet, shared: Arc<EnvShared>, episodes: usize, seed: u64, exec: Exec) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Config("episode count must be >= 1".into()));
    }
    let dims = env_dims(&shared);
    if policy.dims != dims {
        return Err(Error::dim("policy observation width", dims.obs, policy.dims.obs));
    }
    let mut envs = exec.map_range(episodes, |i| ShadowEnv::new(Arc::clone(&shared), seed, i as u64)).into_iter().collect::<Result<Vec<_>>>()?;
    let mut eps: Vec<EvalEpisode> = (0..episodes)
        .map(|index| EvalEpisode { index, length: 0, success: false, cause: None, diverged: false, keyframes_consumed: 0, returns: [0.0; 3], trace: Vec::new() })
        .collect();
    let mut done = vec![false; episodes];
    let na = dims.actions;
    while done.iter().any(|d| !d) {
        let active: Vec<usize> = (0..episodes).filter(|&i| !done[i]).collect();
        let mut slot = vec![usize::MAX; episodes];
        active.iter().enumerate().for_each(|(j, &i)| slot[i] = j);
        let obs: Vec<_> = active.iter().map(|&i| envs[i].observation()).collect();
        let batch = obs_batch(&obs, &dims, shared.max_tokens())?;
        let parts = exec.map(&chunks(batch.batch, 256), |_, idx| policy.act(&batch.subset(idx)));
        let mut mean = Vec::with_capacity(active.len() * na);
        for p in parts {
            mean.extend(p?.0.data);
        }
        let mut work: Vec<(&mut ShadowEnv, &mut EvalEpisode, &mut bool, Result<()>)> =
            envs.iter_mut().zip(eps.iter_mut()).zip(done.iter_mut()).map(|((e, ep), d)| (e, ep, d, Ok(()))).collect();
        exec.for_each_mut(&mut work, |i, (env, ep, d, out)| {
            if !**d {
                let j = slot[i];
                match step_episode(env, ep, &mean[j * na..(j + 1) * na]) {
                    Ok(fin) => **d = fin,
                    Err(e) => *out = Err(e),
                }
            }
        });
        for w in work {
            w.3?;
        }
    }
    let n = episodes as f64;
    let steps: usize = eps.iter().map(|e| e.length).sum();
    let acc: f64 = eps.iter().flat_map(|e| e.trace.iter().map(|p| p.max_joint_acc)).sum();
    Ok(EvalReport {
        success_rate: eps.iter().filter(|e| e.success).count() as f64 / n,
        mean_episode_length: steps as f64 / n,
        mean_max_joint_acc: acc / steps.max(1) as f64,
        keyframe_acc_ratio: keyframe_acc_ratio(eps.iter().map(|e| e.trace.as_slice())),
        episodes: eps,
    })
}

/// Steps one episode with `action`; returns whether it finished.
fn step_episode(env: &mut ShadowEnv, ep: &mut EvalEpisode, action: &[f64]) -> Result<bool> {
    let r = env.step(action)?;
    ep.length += 1;
    for (a, x) in ep.returns.iter_mut().zip(r.rewards) {
        *a += x;
    }
    ep.trace.push(TracePoint { step: ep.length, time: env.state().time, max_joint_acc: r.info.max_joint_acc, keyframe_reached: r.info.consumed });
    if r.done() {
        ep.success = r.success();
        ep.cause = r.info.cause;
        ep.diverged = r.info.diverged;
        ep.keyframes_consumed = env.state().consumed;
    }
    Ok(r.done())
}

/// One step of a replayed episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFrame {
    pub state: SimState,
    pub command: CommandSequence,
    pub action: Vec<f64>,
    pub rewards: [f64; 3],
    pub terminated: bool,
    pub truncated: bool,
}

/// Mean-action rollout of episode 0 of `seed`, recording the state and
/// command after every step. Matches episode 0 of [`evaluate`].
pub fn replay(policy: &PolicyNet, shared: Arc<EnvShared>, seed: u64) -> Result<Vec<ReplayFrame>> {
    let dims = env_dims(&shared);
    if policy.dims != dims {
        return Err(Error::dim("policy observation width", dims.obs, policy.dims.obs));
    }
    let mut env = ShadowEnv::new(Arc::clone(&shared), seed, 0)?;
    let mut frames = Vec::new();
    loop {
        let batch = obs_batch(&[env.observation()], &dims, shared.max_tokens())?;
        let action = policy.act(&batch)?.0.data;
        let r = env.step(&action)?;
        frames.push(ReplayFrame {
            state: env.state().clone(),
            command: env.command().clone(),
            action,
            rewards: r.rewards,
            terminated: r.terminated,
            truncated: r.truncated,
        });
        if r.done() {
            return Ok(frames);
        }
    }
}
