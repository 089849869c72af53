use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{select_index, Encoder, EncoderConfig, Mlp};
use super::params::ParamSet;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Additive attention mask value for padded keys.
const MASKED: f64 = -1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub encoder: EncoderConfig,
    pub mlp_hidden: Vec<usize>,
    pub init_log_std: f64,
    pub min_std: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { encoder: EncoderConfig::default(), mlp_hidden: vec![512, 256, 256], init_log_std: 0.0, min_std: 0.2 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.mlp_hidden.contains(&0) {
            return Err(Error::schema("network.mlp_hidden", "hidden sizes must be >= 1"));
        }
        if !(self.min_std > 0.0) || !self.init_log_std.is_finite() {
            return Err(Error::schema("network.min_std", "min_std must be > 0 and init_log_std finite"));
        }
        Ok(())
    }
}

/// Input and output widths a network is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    /// Proprioception history width.
    pub obs: usize,
    /// Command token width.
    pub token: usize,
    pub actions: usize,
}

/// One observation as seen by the networks.
#[derive(Debug, Clone, Copy)]
pub struct ObsRef<'a> {
    pub proprio: &'a [f64],
    /// `n_tokens · token_width` values, keyframes first and the state target last.
    pub tokens: &'a [f64],
    pub n_tokens: usize,
}

/// Padded batch of observations ready for a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsBatch {
    pub batch: usize,
    pub n_tokens: usize,
    pub proprio: Tensor,
    pub tokens: Tensor,
    pub mask: Tensor,
    /// Selected token row (into `tokens`) for each sample.
    pub select_rows: Vec<usize>,
}

impl ObsBatch {
    /// Pads every sample to `max_tokens` tokens. The selection rule reads
    /// `t_left` from the last feature of each keyframe token.
    pub fn new(items: &[ObsRef<'_>], dims: &NetDims, max_tokens: usize) -> Result<Self> {
        let b = items.len();
        let w = dims.token;
        let mut proprio = Vec::with_capacity(b * dims.obs);
        let mut tokens = vec![0.0; b * max_tokens * w];
        let mut mask = vec![0.0; b * max_tokens * max_tokens];
        let mut select_rows = Vec::with_capacity(b);
        for (i, it) in items.iter().enumerate() {
            if it.proprio.len() != dims.obs {
                return Err(Error::dim("observation width", dims.obs, it.proprio.len()));
            }
            if it.n_tokens == 0 || it.n_tokens > max_tokens {
                return Err(Error::dim("command token count", max_tokens, it.n_tokens));
            }
            if it.tokens.len() != it.n_tokens * w {
                return Err(Error::dim("command token width", it.n_tokens * w, it.tokens.len()));
            }
            proprio.extend_from_slice(it.proprio);
            tokens[i * max_tokens * w..i * max_tokens * w + it.tokens.len()].copy_from_slice(it.tokens);
            for q in 0..max_tokens {
                for k in it.n_tokens..max_tokens {
                    mask[(i * max_tokens + q) * max_tokens + k] = MASKED;
                }
            }
            let state = it.n_tokens - 1;
            let t_lefts: Vec<f64> = (0..state).map(|k| it.tokens[k * w + w - 1]).collect();
            select_rows.push(i * max_tokens + select_index(&t_lefts, state));
        }
        Ok(ObsBatch {
            batch: b,
            n_tokens: max_tokens,
            proprio: Tensor { shape: vec![b, dims.obs], data: proprio },
            tokens: Tensor { shape: vec![b * max_tokens, w], data: tokens },
            mask: Tensor { shape: vec![b, max_tokens, max_tokens], data: mask },
            select_rows,
        })
    }

    /// Samples `idx` of this batch.
    pub fn subset(&self, idx: &[usize]) -> ObsBatch {
        let (t, w, o) = (self.n_tokens, self.tokens.cols(), self.proprio.cols());
        let mut proprio = Vec::with_capacity(idx.len() * o);
        let mut tokens = Vec::with_capacity(idx.len() * t * w);
        let mut mask = Vec::with_capacity(idx.len() * t * t);
        let mut select_rows = Vec::with_capacity(idx.len());
        for (j, &i) in idx.iter().enumerate() {
            proprio.extend_from_slice(self.proprio.row(i));
            tokens.extend_from_slice(&self.tokens.data[i * t * w..(i + 1) * t * w]);
            mask.extend_from_slice(&self.mask.data[i * t * t..(i + 1) * t * t]);
            select_rows.push(j * t + (self.select_rows[i] - i * t));
        }
        ObsBatch {
            batch: idx.len(),
            n_tokens: t,
            proprio: Tensor { shape: vec![idx.len(), o], data: proprio },
            tokens: Tensor { shape: vec![idx.len() * t, w], data: tokens },
            mask: Tensor { shape: vec![idx.len(), t, t], data: mask },
            select_rows,
        }
    }
}

/// Encoder plus MLP trunk shared by the actor and the critics.
#[derive(Debug, Clone, PartialEq)]
struct Trunk {
    encoder: Encoder,
    mlp: Mlp,
}

impl Trunk {
    fn new<R: Rng + ?Sized>(ps: &mut ParamSet, cfg: &NetworkConfig, dims: &NetDims, out: usize, out_gain: f64, rng: &mut R) -> Result<Self> {
        let encoder = Encoder::new(ps, "encoder", dims.token, &cfg.encoder, rng)?;
        let mlp = Mlp::new(ps, "mlp", cfg.encoder.output + dims.obs, &cfg.mlp_hidden, out, out_gain, rng);
        Ok(Trunk { encoder, mlp })
    }

    fn forward(&self, t: &mut Tape, p: &[Var], batch: &ObsBatch) -> Result<Var> {
        let tokens = t.constant(batch.tokens.clone());
        let mask = t.constant(batch.mask.clone());
        let emb = self.encoder.forward(t, p, tokens, mask, batch.batch, batch.n_tokens)?;
        let sel = t.gather_rows(emb, &batch.select_rows)?;
        let obs = t.constant(batch.proprio.clone());
        let x = t.concat(&[sel, obs])?;
        self.mlp.forward(t, p, x)
    }
}

/// Gaussian actor with a state-independent learnable log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub params: ParamSet,
    pub cfg: NetworkConfig,
    pub dims: NetDims,
    trunk: Trunk,
    log_std: usize,
}

/// Critic producing one value per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub params: ParamSet,
    pub cfg: NetworkConfig,
    pub dims: NetDims,
    trunk: Trunk,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(cfg: &NetworkConfig, dims: NetDims, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let trunk = Trunk::new(&mut params, cfg, &dims, dims.actions, 0.01, rng)?;
        let log_std = params.add("log_std", Tensor::full(&[dims.actions], cfg.init_log_std));
        Ok(PolicyNet { params, cfg: cfg.clone(), dims, trunk, log_std })
    }

    /// Mean `[B, n_actions]` and std `[n_actions]`, with `std = max(exp(log_std), min_std)`.
    pub fn forward(&self, t: &mut Tape, p: &[Var], batch: &ObsBatch) -> Result<(Var, Var)> {
        let mean = self.trunk.forward(t, p, batch)?;
        let raw = t.exp(p[self.log_std]);
        Ok((mean, t.clamp_min(raw, self.cfg.min_std)))
    }

    /// Mean actions and std without gradient tracking.
    pub fn act(&self, batch: &ObsBatch) -> Result<(Tensor, Vec<f64>)> {
        let mut t = Tape::new();
        let p = self.params.constants(&mut t);
        let (mean, std) = self.forward(&mut t, &p, batch)?;
        Ok((t.value(mean).clone(), t.value(std).data.clone()))
    }
}

impl CriticNet {
    pub fn new<R: Rng + ?Sized>(cfg: &NetworkConfig, dims: NetDims, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let trunk = Trunk::new(&mut params, cfg, &dims, 1, 1.0, rng)?;
        Ok(CriticNet { params, cfg: cfg.clone(), dims, trunk })
    }

    /// Values `[B]`.
    pub fn forward(&self, t: &mut Tape, p: &[Var], batch: &ObsBatch) -> Result<Var> {
        let v = self.trunk.forward(t, p, batch)?;
        t.reshape(v, &[batch.batch])
    }

    pub fn values(&self, batch: &ObsBatch) -> Result<Vec<f64>> {
        let mut t = Tape::new();
        let p = self.params.constants(&mut t);
        let v = self.forward(&mut t, &p, batch)?;
        Ok(t.value(v).data.clone())
    }
}

/// Parameter count of the default-architecture trunk for the given widths;
/// `out` is the head width (actions for the policy, 1 for a critic).
pub fn trunk_param_count(cfg: &NetworkConfig, dims: &NetDims, out: usize) -> usize {
    let e = &cfg.encoder;
    let lin = |i: usize, o: usize| i * o + o;
    let d = e.d_model;
    let block = 2 * (2 * d) + 4 * lin(d, d) + lin(d, e.feedforward) + lin(e.feedforward, d);
    let encoder = lin(dims.token, d) + e.num_layers * block + 2 * d + lin(d, e.output);
    let mut widths = vec![e.output + dims.obs];
    widths.extend_from_slice(&cfg.mlp_hidden);
    widths.push(out);
    encoder + widths.windows(2).map(|w| lin(w[0], w[1])).sum::<usize>()
}

/// Diagonal Gaussian log-density summed over dimensions.
pub fn gaussian_log_prob(mean: &[f64], std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s;
            -0.5 * z * z - s.ln() - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// Differentiable log-density per sample: `mean [B,n]`, `std [n]`, `action [B,n]` → `[B]`.
pub fn gaussian_log_prob_tape(t: &mut Tape, mean: Var, std: Var, action: Var) -> Result<Var> {
    let n = t.value(std).numel();
    let log_std = t.log(std);
    let diff = t.sub(action, mean)?;
    let neg = t.scale(log_std, -1.0);
    let inv = t.exp(neg);
    let z = t.mul(diff, inv)?;
    let sq = t.square(z);
    let s = t.sum_last(sq);
    let s = t.scale(s, -0.5);
    let ls = t.sum(log_std);
    let lp = t.sub(s, ls)?;
    let c = t.constant(Tensor::scalar(-0.5 * n as f64 * (2.0 * PI).ln()));
    t.add(lp, c)
}

/// Entropy of a diagonal Gaussian.
pub fn gaussian_entropy_tape(t: &mut Tape, std: Var) -> Result<Var> {
    let n = t.value(std).numel();
    let log_std = t.log(std);
    let s = t.sum(log_std);
    let c = t.constant(Tensor::scalar(0.5 * n as f64 * (2.0 * PI * std::f64::consts::E).ln()));
    t.add(s, c)
}

/// `KL(old ‖ new)` of diagonal Gaussians, summed over dimensions.
pub fn gaussian_kl(mean_old: &[f64], std_old: &[f64], mean_new: &[f64], std_new: &[f64]) -> f64 {
    (0..mean_old.len())
        .map(|i| {
            let (so, sn) = (std_old[i], std_new[i]);
            let dm = mean_old[i] - mean_new[i];
            (sn / so).ln() + (so * so + dm * dm) / (2.0 * sn * sn) - 0.5
        })
        .sum()
}
