use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// `y = x·W + b` on `[rows, in]` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Xavier-uniform weights scaled by `gain`, zero bias.
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, gain: f64, rng: &mut R) -> Self {
        let bound = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = ps.add(format!("{name}.w"), Tensor::uniform(&[fan_in, fan_out], bound, rng));
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[fan_out]));
        Linear { w, b, fan_in, fan_out }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let y = t.matmul(x, p[self.w])?;
        t.add(y, p[self.b])
    }
}

/// Layer normalization with learnable gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub g: usize,
    pub b: usize,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize) -> Self {
        let g = ps.add(format!("{name}.g"), Tensor::full(&[dim], 1.0));
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[dim]));
        LayerNorm { g, b }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let n = t.layer_norm(x, LN_EPS);
        let y = t.mul(n, p[self.g])?;
        t.add(y, p[self.b])
    }
}

/// Fully connected stack with ELU between layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamSet, name: &str, input: usize, hidden: &[usize], output: usize, out_gain: f64, rng: &mut R) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 == n { out_gain } else { 1.0 };
                Linear::new(ps, &format!("{name}.{i}"), dims[i], dims[i + 1], gain, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], mut x: Var) -> Result<Var> {
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(t, p, x)?;
            if i + 1 < self.layers.len() {
                x = t.elu(x);
            }
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub num_heads: usize,
    pub num_layers: usize,
    pub d_model: usize,
    pub feedforward: usize,
    pub output: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { num_heads: 1, num_layers: 2, d_model: 128, feedforward: 128, output: 128 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.d_model == 0 || self.d_model % self.num_heads != 0 {
            return Err(Error::schema("network.encoder.d_model", format!("d_model {} must be a positive multiple of num_heads {}", self.d_model, self.num_heads)));
        }
        if self.feedforward == 0 || self.output == 0 {
            return Err(Error::schema("network.encoder", "feedforward and output sizes must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

/// Command encoder: ReLU input projection, pre-norm self-attention blocks
/// with GELU feedforward, final layer norm and a linear output. No positional
/// encoding, so it is equivariant to token permutations.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub input_dim: usize,
    proj: Linear,
    blocks: Vec<Block>,
    ln_out: LayerNorm,
    out: Linear,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamSet, name: &str, input_dim: usize, cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let proj = Linear::new(ps, &format!("{name}.proj"), input_dim, d, 1.0, rng);
        let blocks = (0..cfg.num_layers)
            .map(|i| {
                let n = format!("{name}.layer{i}");
                Block {
                    ln1: LayerNorm::new(ps, &format!("{n}.ln1"), d),
                    q: Linear::new(ps, &format!("{n}.q"), d, d, 1.0, rng),
                    k: Linear::new(ps, &format!("{n}.k"), d, d, 1.0, rng),
                    v: Linear::new(ps, &format!("{n}.v"), d, d, 1.0, rng),
                    o: Linear::new(ps, &format!("{n}.o"), d, d, 1.0, rng),
                    ln2: LayerNorm::new(ps, &format!("{n}.ln2"), d),
                    ff1: Linear::new(ps, &format!("{n}.ff1"), d, cfg.feedforward, 1.0, rng),
                    ff2: Linear::new(ps, &format!("{n}.ff2"), cfg.feedforward, d, 1.0, rng),
                }
            })
            .collect();
        let ln_out = LayerNorm::new(ps, &format!("{name}.ln_out"), d);
        let out = Linear::new(ps, &format!("{name}.out"), d, cfg.output, 1.0, rng);
        Ok(Encoder { cfg: cfg.clone(), input_dim, proj, blocks, ln_out, out })
    }

    /// `tokens`: `[batch·n_tokens, input_dim]`; `mask`: additive `[batch, n_tokens, n_tokens]`
    /// (0 for visible keys, large negative for padding). Returns `[batch·n_tokens, output]`.
    pub fn forward(&self, t: &mut Tape, p: &[Var], tokens: Var, mask: Var, batch: usize, n_tokens: usize) -> Result<Var> {
        let tv = t.value(tokens);
        if tv.shape != [batch * n_tokens, self.input_dim] {
            return Err(Error::Shape { op: "encoder input", lhs: tv.shape.clone(), rhs: vec![batch * n_tokens, self.input_dim] });
        }
        let d = self.cfg.d_model;
        let heads = self.cfg.num_heads;
        let dh = d / heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let x0 = self.proj.forward(t, p, tokens)?;
        let mut x = t.relu(x0);
        for blk in &self.blocks {
            let h = blk.ln1.forward(t, p, x)?;
            let q = blk.q.forward(t, p, h)?;
            let k = blk.k.forward(t, p, h)?;
            let v = blk.v.forward(t, p, h)?;
            let mut ctx = Vec::with_capacity(heads);
            for hd in 0..heads {
                let split = |t: &mut Tape, m: Var| -> Result<Var> {
                    let s = if heads == 1 { m } else { t.slice(m, hd * dh, (hd + 1) * dh)? };
                    t.reshape(s, &[batch, n_tokens, dh])
                };
                let (qh, kh, vh) = (split(t, q)?, split(t, k)?, split(t, v)?);
                let scores = t.bmm(qh, kh, true)?;
                let scores = t.scale(scores, inv_sqrt);
                let scores = t.add(scores, mask)?;
                let att = t.softmax(scores);
                let c = t.bmm(att, vh, false)?;
                ctx.push(t.reshape(c, &[batch * n_tokens, dh])?);
            }
            let c = if heads == 1 { ctx[0] } else { t.concat(&ctx)? };
            let a = blk.o.forward(t, p, c)?;
            x = t.add(x, a)?;
            let h2 = blk.ln2.forward(t, p, x)?;
            let f = blk.ff1.forward(t, p, h2)?;
            let f = t.gelu(f);
            let f = blk.ff2.forward(t, p, f)?;
            x = t.add(x, f)?;
        }
        let x = self.ln_out.forward(t, p, x)?;
        self.out.forward(t, p, x)
    }
}

/// Index of the token with the smallest strictly positive time-left, or
/// `state_target_index` when none is positive.
pub fn select_index(t_lefts: &[f64], state_target_index: usize) -> usize {
    t_lefts
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > 0.0)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map_or(state_target_index, |(i, _)| i)
}

/// Picks one embedding row per the selection rule; only that row receives gradient.
pub fn select_embedding(t: &mut Tape, embeddings: Var, t_lefts: &[f64], state_target_index: usize) -> Result<Var> {
    let i = select_index(t_lefts, state_target_index);
    t.gather_rows(embeddings, &[i])
}
