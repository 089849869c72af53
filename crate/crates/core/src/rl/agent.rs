use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::advantage::{compute_gae, mix_advantages, single_critic_reward, value_targets};
use super::buffer::RolloutBuffer;
use super::config::{adapt_lr, CriticMode, PPOConfig};
use crate::error::{Error, Result};
use crate::nn::{
    clip_grad_norm, gaussian_entropy_tape, gaussian_kl, gaussian_log_prob_tape, AdamW, AdamWConfig, CriticNet, NetDims, NetworkConfig, ObsBatch,
    ParamSet, PolicyNet, Tape, Tensor,
};
use crate::par::Exec;

/// RNG stream used to initialize the policy; critic `k` uses the next ones.
const POLICY_INIT_STREAM: u64 = 1 << 32;

/// Actor, critics and their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub mode: CriticMode,
    pub policy: PolicyNet,
    pub critics: Vec<CriticNet>,
    pub opt_policy: AdamW,
    pub opt_critics: Vec<AdamW>,
    pub lr: f64,
}

/// Averages over all minibatches of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub loss_surrogate: f64,
    /// Unused critics report zero.
    pub loss_values: [f64; 3],
    pub approx_kl: f64,
    pub entropy: f64,
    pub lr: f64,
}

fn init_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

impl Agent {
    /// Each network draws its initial weights from its own RNG stream, so the
    /// policy and first critic do not depend on how many critics exist.
    pub fn new(net: &NetworkConfig, dims: NetDims, ppo: &PPOConfig, mode: CriticMode, seed: u64) -> Result<Self> {
        let policy = PolicyNet::new(net, dims, &mut init_rng(seed, POLICY_INIT_STREAM))?;
        let n = match mode {
            CriticMode::Multi => 3,
            CriticMode::Single => 1,
        };
        let critics = (0..n)
            .map(|k| CriticNet::new(net, dims, &mut init_rng(seed, POLICY_INIT_STREAM + 1 + k as u64)))
            .collect::<Result<Vec<_>>>()?;
        let acfg = AdamWConfig { weight_decay: ppo.weight_decay, ..Default::default() };
        let opt_policy = AdamW::new(&policy.params, acfg.clone());
        let opt_critics = critics.iter().map(|c| AdamW::new(&c.params, acfg.clone())).collect();
        Ok(Agent { mode, policy, critics, opt_policy, opt_critics, lr: ppo.lr })
    }

    pub fn dims(&self) -> NetDims {
        self.policy.dims
    }

    /// Mean actions `[B, n]` and std, evaluated in chunks.
    pub fn act(&self, batch: &ObsBatch, chunk: usize, exec: Exec) -> Result<(Vec<f64>, Vec<f64>)> {
        let parts = exec.map(&chunks(batch.batch, chunk), |_, idx| self.policy.act(&batch.subset(idx)));
        let mut mean = Vec::with_capacity(batch.batch * self.dims().actions);
        let mut std = Vec::new();
        for p in parts {
            let (m, s) = p?;
            mean.extend_from_slice(&m.data);
            std = s;
        }
        if std.is_empty() {
            std = self.policy.act(&batch.subset(&[]))?.1;
        }
        Ok((mean, std))
    }

    /// Values of every critic, `[critic][B]`.
    pub fn values(&self, batch: &ObsBatch, chunk: usize, exec: Exec) -> Result<Vec<Vec<f64>>> {
        let ch = chunks(batch.batch, chunk);
        self.critics
            .iter()
            .map(|c| {
                let parts = exec.map(&ch, |_, idx| c.values(&batch.subset(idx)));
                let mut v = Vec::with_capacity(batch.batch);
                for p in parts {
                    v.extend(p?);
                }
                Ok(v)
            })
            .collect()
    }

    /// All network parameters under `policy.`/`critic{k}.` prefixes.
    pub fn named_params(&self) -> Vec<(String, &ParamSet)> {
        let mut v = vec![("policy".to_string(), &self.policy.params)];
        v.extend(self.critics.iter().enumerate().map(|(k, c)| (format!("critic{k}"), &c.params)));
        v
    }

    pub fn param_sets_mut(&mut self) -> Vec<&mut ParamSet> {
        let mut v = vec![&mut self.policy.params];
        v.extend(self.critics.iter_mut().map(|c| &mut c.params));
        v
    }
}

/// Consecutive index chunks of at most `size`.
pub fn chunks(n: usize, size: usize) -> Vec<Vec<usize>> {
    (0..n).collect::<Vec<_>>().chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Per-stream rewards the critics regress, `[critic][T·N]`.
pub fn critic_rewards(buf: &RolloutBuffer, mode: CriticMode, w: [f64; 3]) -> Vec<Vec<f64>> {
    match mode {
        CriticMode::Multi => (0..3).map(|k| buf.rewards.iter().map(|r| r[k]).collect()).collect(),
        CriticMode::Single => vec![buf.rewards.iter().map(|r| single_critic_reward(*r, w)).collect()],
    }
}

/// Advantages per critic stream and the mixed advantage used by the actor.
pub struct Advantages {
    pub streams: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub mixed: Vec<f64>,
}

pub fn advantages(buf: &RolloutBuffer, mode: CriticMode, cfg: &PPOConfig) -> Result<Advantages> {
    let rewards = critic_rewards(buf, mode, cfg.weights);
    if rewards.len() != buf.values.len() {
        return Err(Error::dim("critic count", rewards.len(), buf.values.len()));
    }
    let dones = buf.dones();
    let mut streams = Vec::new();
    let mut targets = Vec::new();
    for (k, r) in rewards.iter().enumerate() {
        let a = compute_gae(r, &buf.values[k], &buf.next_values[k], &dones, buf.n_envs, cfg.gamma, cfg.lambda)?;
        targets.push(value_targets(cfg.value_target, &a, &buf.values[k], r, &buf.next_values[k], cfg.gamma));
        streams.push(a);
    }
    let mixed = match mode {
        CriticMode::Multi => mix_advantages(&streams, &cfg.weights, cfg.norm_eps)?,
        CriticMode::Single => mix_advantages(&streams, &[1.0], cfg.norm_eps)?,
    };
    Ok(Advantages { streams, targets, mixed })
}

struct ChunkOut {
    grads: Vec<Vec<Tensor>>,
    surrogate: f64,
    value_sq: Vec<f64>,
    kl: f64,
    entropy: f64,
}

struct MbData<'a> {
    obs: &'a ObsBatch,
    actions: &'a [f64],
    old_logp: &'a [f64],
    old_mean: &'a [f64],
    old_std: &'a [f64],
    adv: &'a [f64],
    targets: &'a [Vec<f64>],
}

fn chunk_grads(agent: &Agent, cfg: &PPOConfig, d: &MbData<'_>, idx: &[usize], mb_size: usize) -> Result<ChunkOut> {
    let na = agent.dims().actions;
    let b = idx.len();
    let obs = d.obs.subset(idx);
    let mut t = Tape::new();
    let pp = agent.policy.params.leaves(&mut t);
    let cp: Vec<_> = agent.critics.iter().map(|c| c.params.leaves(&mut t)).collect();

    let (mean, std) = agent.policy.forward(&mut t, &pp, &obs)?;
    let act = t.constant(Tensor { shape: vec![b, na], data: idx.iter().flat_map(|&i| d.actions[i * na..(i + 1) * na].iter().copied()).collect() });
    let logp = gaussian_log_prob_tape(&mut t, mean, std, act)?;
    let old = t.constant(Tensor::from_vec(idx.iter().map(|&i| d.old_logp[i]).collect()));
    let diff = t.sub(logp, old)?;
    let ratio = t.exp(diff);
    let adv = t.constant(Tensor::from_vec(idx.iter().map(|&i| d.adv[i]).collect()));
    let s1 = t.mul(ratio, adv)?;
    let rc = t.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    let s2 = t.mul(rc, adv)?;
    let obj = t.minimum(s1, s2)?;
    let obj_sum = t.sum(obj);
    let inv_mb = 1.0 / mb_size as f64;
    let surr = t.scale(obj_sum, -inv_mb);
    let ent = gaussian_entropy_tape(&mut t, std)?;
    let ent_term = t.scale(ent, -cfg.entropy_coef * b as f64 * inv_mb);
    let mut loss = t.add(surr, ent_term)?;

    let mut value_sq = Vec::with_capacity(agent.critics.len());
    for (k, c) in agent.critics.iter().enumerate() {
        let v = c.forward(&mut t, &cp[k], &obs)?;
        let tg = t.constant(Tensor::from_vec(idx.iter().map(|&i| d.targets[k][i]).collect()));
        let e = t.sub(v, tg)?;
        let sq = t.square(e);
        let s = t.sum(sq);
        value_sq.push(t.value(s).item());
        let term = t.scale(s, cfg.value_coef * inv_mb);
        loss = t.add(loss, term)?;
    }
    let lv = t.value(loss).item();
    if !lv.is_finite() {
        return Err(Error::NonFinite(format!("loss {lv} on chunk starting at sample {}", idx.first().copied().unwrap_or(0))));
    }

    let mv = &t.value(mean).data;
    let sv = &t.value(std).data;
    let kl = idx
        .iter()
        .enumerate()
        .map(|(j, &i)| gaussian_kl(&d.old_mean[i * na..(i + 1) * na], d.old_std, &mv[j * na..(j + 1) * na], sv))
        .sum();
    let surrogate = t.value(obj_sum).item();
    let entropy = t.value(ent).item() * b as f64;

    let mut g = t.backward(loss)?;
    let mut grads = vec![pp.iter().map(|&v| g.take(v)).collect::<Vec<_>>()];
    for vars in &cp {
        grads.push(vars.iter().map(|&v| g.take(v)).collect());
    }
    Ok(ChunkOut { grads, surrogate, value_sq, kl, entropy })
}

fn accumulate(acc: &mut Option<Vec<Vec<Tensor>>>, add: Vec<Vec<Tensor>>) {
    match acc {
        None => *acc = Some(add),
        Some(a) => {
            for (na, nb) in a.iter_mut().zip(add) {
                for (ta, tb) in na.iter_mut().zip(nb) {
                    ta.data.iter_mut().zip(&tb.data).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
}

/// Clipped-surrogate PPO over `cfg.epochs` passes of shuffled minibatches.
/// Gradients of every chunk are summed in chunk order, so results do not
/// depend on the worker count.
pub fn ppo_update(agent: &mut Agent, buf: &RolloutBuffer, cfg: &PPOConfig, rng: &mut ChaCha8Rng, exec: Exec) -> Result<UpdateStats> {
    let total = buf.len();
    if total == 0 || total % cfg.num_minibatches != 0 {
        return Err(Error::Config(format!("batch of {total} samples does not split into {} minibatches", cfg.num_minibatches)));
    }
    let adv = advantages(buf, agent.mode, cfg)?;
    let obs = buf.obs_batch(&agent.dims())?;
    let data = MbData {
        obs: &obs,
        actions: &buf.actions,
        old_logp: &buf.log_probs,
        old_mean: &buf.means,
        old_std: &buf.std,
        adv: &adv.mixed,
        targets: &adv.targets,
    };
    let mb_size = total / cfg.num_minibatches;
    let mut stats = UpdateStats::default();
    let mut n_mb = 0usize;
    let mut perm: Vec<usize> = (0..total).collect();
    for _ in 0..cfg.epochs {
        perm.shuffle(rng);
        for mb in perm.chunks(mb_size) {
            let pieces: Vec<Vec<usize>> = mb.chunks(cfg.chunk).map(<[usize]>::to_vec).collect();
            let outs = exec.map(&pieces, |_, idx| chunk_grads(agent, cfg, &data, idx, mb_size));
            let mut grads = None;
            let (mut surr, mut kl, mut ent) = (0.0, 0.0, 0.0);
            let mut vsq = vec![0.0; agent.critics.len()];
            for o in outs {
                let o = o?;
                surr += o.surrogate;
                kl += o.kl;
                ent += o.entropy;
                vsq.iter_mut().zip(&o.value_sq).for_each(|(a, b)| *a += b);
                accumulate(&mut grads, o.grads);
            }
            let mut grads = grads.expect("minibatch is non-empty");
            let kl = kl / mb_size as f64;
            if cfg.adaptive_lr {
                agent.lr = adapt_lr(agent.lr, kl, cfg.desired_kl);
            }
            for g in &mut grads {
                clip_grad_norm(g, cfg.max_grad_norm);
            }
            let lr = agent.lr;
            let mut gi = grads.into_iter();
            agent.opt_policy.step(&mut agent.policy.params, &gi.next().expect("policy grads"), lr)?;
            for ((c, opt), g) in agent.critics.iter_mut().zip(&mut agent.opt_critics).zip(gi) {
                opt.step(&mut c.params, &g, lr)?;
            }
            stats.loss_surrogate += -surr / mb_size as f64;
            for (k, v) in vsq.iter().enumerate() {
                stats.loss_values[k] += v / mb_size as f64;
            }
            stats.approx_kl += kl;
            stats.entropy += ent / mb_size as f64;
            n_mb += 1;
        }
    }
    let n = n_mb as f64;
    stats.loss_surrogate /= n;
    stats.loss_values.iter_mut().for_each(|v| *v /= n);
    stats.approx_kl /= n;
    stats.entropy /= n;
    stats.lr = agent.lr;
    Ok(stats)
}
