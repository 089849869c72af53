//! Central finite-difference gradient checks for every tape op and for the
//! network composites.
//!
//! Each check projects the output onto a fixed random tensor `R`, so the loss
//! is `Σ out ⊙ R`, and compares the tape gradient of every probed input
//! coordinate against `(L(x + h) − L(x − h)) / 2h`.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Encoder, EncoderConfig};
use super::params::ParamSet;
use super::policy::{gaussian_log_prob_tape, CriticNet, NetDims, NetworkConfig, ObsBatch, ObsRef, PolicyNet};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const OP_TOL: f64 = 1e-4;
pub const COMPOSITE_TOL: f64 = 1e-3;
/// Random shapes per op.
pub const CASES_PER_OP: usize = 12;
pub const SUITE_SEED: u64 = 0x9e37_79b9;

/// Distance kept from kinks (relu at 0, clamp bounds, ties in minimum).
const KINK_GAP: f64 = 0.02;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub coords: usize,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

/// Which input coordinates to probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coords {
    All,
    /// At most this many random coordinates per input tensor.
    PerTensor(usize),
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

struct Case {
    inputs: Vec<Tensor>,
    build: Build,
}

fn projected(out: &Tensor, r: &Tensor) -> f64 {
    out.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
}

fn eval(inputs: &[Tensor], build: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>, r: &Tensor) -> Result<f64> {
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
    let out = build(&mut t, &vars)?;
    Ok(projected(t.value(out), r))
}

/// Largest relative error and number of probed coordinates.
pub fn check_gradients<R: Rng + ?Sized>(
    inputs: &[Tensor],
    build: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>,
    coords: Coords,
    rng: &mut R,
) -> Result<(f64, usize)> {
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.param(x.clone())).collect();
    let out = build(&mut t, &vars)?;
    let r = Tensor::randn(&t.value(out).shape, 1.0, rng);
    let rv = t.constant(r.clone());
    let prod = t.mul(out, rv)?;
    let loss = t.sum(prod);
    let grads = t.backward(loss)?;

    let mut work = inputs.to_vec();
    let (mut worst, mut probed) = (0.0f64, 0);
    for (k, v) in vars.iter().enumerate() {
        let g = grads.get(*v);
        let n = inputs[k].numel();
        let idx: Vec<usize> = match coords {
            Coords::All => (0..n).collect(),
            Coords::PerTensor(m) if m >= n => (0..n).collect(),
            Coords::PerTensor(m) => (0..m).map(|_| rng.random_range(0..n)).collect(),
        };
        for i in idx {
            let x0 = work[k].data[i];
            work[k].data[i] = x0 + FD_STEP;
            let lp = eval(&work, build, &r)?;
            work[k].data[i] = x0 - FD_STEP;
            let lm = eval(&work, build, &r)?;
            work[k].data[i] = x0;
            let num = (lp - lm) / (2.0 * FD_STEP);
            let e = rel_err(g.data[i], num);
            worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
            probed += 1;
        }
    }
    Ok((worst, probed))
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=5)
}

fn shape(rng: &mut ChaCha8Rng, min_rank: usize) -> Vec<usize> {
    let rank = rng.random_range(min_rank.max(1)..=3);
    (0..rank).map(|_| dim(rng)).collect()
}

/// Uniform in `[lo, hi]`, resampled while within [`KINK_GAP`] of any kink.
fn away(shape: &[usize], lo: f64, hi: f64, kinks: &[f64], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v = rng.random_range(lo..hi);
            if kinks.iter().all(|k| (v - k).abs() > KINK_GAP) {
                break v;
            }
        })
        .collect();
    Tensor { shape: shape.to_vec(), data }
}

fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    away(shape, -2.0, 2.0, &[], rng)
}

fn unary_case(rng: &mut ChaCha8Rng, lo: f64, hi: f64, kinks: &[f64], f: fn(&mut Tape, Var) -> Var) -> Case {
    let s = shape(rng, 1);
    Case { inputs: vec![away(&s, lo, hi, kinks, rng)], build: Box::new(move |t, v| Ok(f(t, v[0]))) }
}

/// Shape `a` with a random trailing suffix (possibly scalar) for `b`.
fn broadcast_pair(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let a = shape(rng, 1);
    let b = match rng.random_range(0..4) {
        0 => vec![],
        1 => a.clone(),
        _ => a[rng.random_range(0..a.len())..].to_vec(),
    };
    (a, b)
}

type Gen = fn(&mut ChaCha8Rng) -> Case;

/// Every differentiable tape op with its random-case generator.
fn op_cases() -> Vec<(&'static str, Gen)> {
    vec![
        ("matmul", |rng| {
            let (m, k, n) = (dim(rng), dim(rng), dim(rng));
            Case { inputs: vec![rand_t(&[m, k], rng), rand_t(&[k, n], rng)], build: Box::new(|t, v| t.matmul(v[0], v[1])) }
        }),
        ("bmm", |rng| {
            let (b, m, k, n) = (dim(rng), dim(rng), dim(rng), dim(rng));
            Case { inputs: vec![rand_t(&[b, m, k], rng), rand_t(&[b, k, n], rng)], build: Box::new(|t, v| t.bmm(v[0], v[1], false)) }
        }),
        ("bmm_trans_b", |rng| {
            let (b, m, k, n) = (dim(rng), dim(rng), dim(rng), dim(rng));
            Case { inputs: vec![rand_t(&[b, m, k], rng), rand_t(&[b, n, k], rng)], build: Box::new(|t, v| t.bmm(v[0], v[1], true)) }
        }),
        ("add", |rng| {
            let (a, b) = broadcast_pair(rng);
            Case { inputs: vec![rand_t(&a, rng), rand_t(&b, rng)], build: Box::new(|t, v| t.add(v[0], v[1])) }
        }),
        ("sub", |rng| {
            let (a, b) = broadcast_pair(rng);
            Case { inputs: vec![rand_t(&a, rng), rand_t(&b, rng)], build: Box::new(|t, v| t.sub(v[0], v[1])) }
        }),
        ("mul", |rng| {
            let (a, b) = broadcast_pair(rng);
            Case { inputs: vec![rand_t(&a, rng), rand_t(&b, rng)], build: Box::new(|t, v| t.mul(v[0], v[1])) }
        }),
        ("scale", |rng| {
            let s = shape(rng, 1);
            let c = rng.random_range(-3.0..3.0);
            Case { inputs: vec![rand_t(&s, rng)], build: Box::new(move |t, v| Ok(t.scale(v[0], c))) }
        }),
        ("concat", |rng| {
            let lead = shape(rng, 1)[1..].to_vec();
            let parts = rng.random_range(1..=3);
            let inputs = (0..parts)
                .map(|_| {
                    let mut s = lead.clone();
                    s.push(dim(rng));
                    rand_t(&s, rng)
                })
                .collect();
            Case { inputs, build: Box::new(|t, v| t.concat(v)) }
        }),
        ("slice", |rng| {
            let s = shape(rng, 1);
            let c = *s.last().unwrap();
            let start = rng.random_range(0..c);
            let end = rng.random_range(start + 1..=c);
            Case { inputs: vec![rand_t(&s, rng)], build: Box::new(move |t, v| t.slice(v[0], start, end)) }
        }),
        ("sum", |rng| {
            let s = shape(rng, 1);
            Case { inputs: vec![rand_t(&s, rng)], build: Box::new(|t, v| Ok(t.sum(v[0]))) }
        }),
        ("mean", |rng| {
            let s = shape(rng, 1);
            Case { inputs: vec![rand_t(&s, rng)], build: Box::new(|t, v| Ok(t.mean(v[0]))) }
        }),
        ("sum_last", |rng| {
            let s = shape(rng, 1);
            Case { inputs: vec![rand_t(&s, rng)], build: Box::new(|t, v| Ok(t.sum_last(v[0]))) }
        }),
        ("softmax", |rng| {
            let s = shape(rng, 1);
            Case { inputs: vec![rand_t(&s, rng)], build: Box::new(|t, v| Ok(t.softmax(v[0]))) }
        }),
        ("layer_norm", |rng| {
            let mut s = shape(rng, 1);
            *s.last_mut().unwrap() += 1;
            Case { inputs: vec![rand_t(&s, rng)], build: Box::new(|t, v| Ok(t.layer_norm(v[0], 1e-5))) }
        }),
        ("relu", |rng| unary_case(rng, -2.0, 2.0, &[0.0], Tape::relu)),
        ("elu", |rng| unary_case(rng, -2.0, 2.0, &[0.0], Tape::elu)),
        ("gelu", |rng| unary_case(rng, -3.0, 3.0, &[], Tape::gelu)),
        ("tanh", |rng| unary_case(rng, -2.0, 2.0, &[], Tape::tanh)),
        ("exp", |rng| unary_case(rng, -2.0, 2.0, &[], Tape::exp)),
        ("log", |rng| unary_case(rng, 0.2, 3.0, &[], Tape::log)),
        ("square", |rng| unary_case(rng, -2.0, 2.0, &[], Tape::square)),
        ("clamp", |rng| {
            let s = shape(rng, 1);
            Case { inputs: vec![away(&s, -1.0, 1.0, &[-0.5, 0.5], rng)], build: Box::new(|t, v| Ok(t.clamp(v[0], -0.5, 0.5))) }
        }),
        ("clamp_min", |rng| {
            let s = shape(rng, 1);
            Case { inputs: vec![away(&s, -1.0, 1.0, &[0.2], rng)], build: Box::new(|t, v| Ok(t.clamp_min(v[0], 0.2))) }
        }),
        ("minimum", |rng| {
            let s = shape(rng, 1);
            let a = rand_t(&s, rng);
            let b = Tensor { shape: s, data: a.data.iter().map(|&x| x + away(&[], -1.0, 1.0, &[0.0], rng).data[0]).collect() };
            Case { inputs: vec![a, b], build: Box::new(|t, v| t.minimum(v[0], v[1])) }
        }),
        ("gather_rows", |rng| {
            let (r, c) = (dim(rng), dim(rng));
            let all: Vec<usize> = (0..r).collect();
            let idx: Vec<usize> = (0..rng.random_range(1..=6)).map(|_| *all.choose(rng).unwrap()).collect();
            Case { inputs: vec![rand_t(&[r, c], rng)], build: Box::new(move |t, v| t.gather_rows(v[0], &idx)) }
        }),
        ("reshape", |rng| {
            let s = shape(rng, 1);
            let n: usize = s.iter().product();
            Case {
                inputs: vec![rand_t(&s, rng)],
                build: Box::new(move |t, v| {
                    let y = t.reshape(v[0], &[1, n])?;
                    // a non-elementwise consumer so the reshaped layout matters
                    let w = t.constant(Tensor { shape: vec![n, 2], data: (0..2 * n).map(|i| (i as f64 * 0.37).sin()).collect() });
                    t.matmul(y, w)
                }),
            }
        }),
    ]
}

/// Square op whose backward returns `x` instead of `2x`.
pub fn broken_square(t: &mut Tape, x: Var) -> Var {
    let v = t.value(x);
    let out = Tensor { shape: v.shape.clone(), data: v.data.iter().map(|a| a * a).collect() };
    let bw: super::tape::CustomBackward =
        Arc::new(|inp, _out, g| vec![Tensor { shape: g.shape.clone(), data: g.data.iter().zip(&inp[0].data).map(|(g, x)| g * x).collect() }]);
    t.custom(&[x], out, bw)
}

/// Check of [`broken_square`]; must fail.
pub fn broken_backward_check(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_op("broken_square", |rng| unary_case(rng, -2.0, 2.0, &[0.0], broken_square), &mut rng)
}

fn run_op(name: &str, gen: Gen, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let (mut worst, mut coords) = (0.0f64, 0);
    for _ in 0..CASES_PER_OP {
        let case = gen(rng);
        let (e, n) = check_gradients(&case.inputs, &*case.build, Coords::All, rng)?;
        worst = worst.max(e);
        coords += n;
    }
    Ok(CheckResult { name: name.to_string(), cases: CASES_PER_OP, coords, max_rel_err: worst, tol: OP_TOL })
}

/// Observation batch with mixed token counts and signed `t_left`.
fn sample_batch(dims: &NetDims, max_tokens: usize, batch: usize, rng: &mut ChaCha8Rng) -> Result<ObsBatch> {
    let data: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..batch)
        .map(|_| {
            let n_tokens = rng.random_range(1..=max_tokens);
            let proprio = (0..dims.obs).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tokens = (0..n_tokens * dims.token).map(|_| rng.random_range(-1.0..1.0)).collect();
            (proprio, tokens, n_tokens)
        })
        .collect();
    let refs: Vec<ObsRef<'_>> = data.iter().map(|(p, t, n)| ObsRef { proprio: p, tokens: t, n_tokens: *n }).collect();
    ObsBatch::new(&refs, dims, max_tokens)
}

fn composite(name: &str, cases: usize, (e, n): (f64, usize)) -> CheckResult {
    CheckResult { name: name.to_string(), cases, coords: n, max_rel_err: e, tol: COMPOSITE_TOL }
}

fn with_params(ps: &ParamSet, extra: &[Tensor]) -> Vec<Tensor> {
    let mut v = ps.tensors().to_vec();
    v.extend_from_slice(extra);
    v
}

fn composite_checks(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    // Small two-head encoder: every parameter and every token input.
    let cfg = EncoderConfig { num_heads: 2, num_layers: 2, d_model: 6, feedforward: 10, output: 5 };
    let (batch, n_tok, width) = (2, 3, 4);
    let mut ps = ParamSet::new();
    let enc = Encoder::new(&mut ps, "encoder", width, &cfg, rng)?;
    let np = ps.len();
    let tokens = rand_t(&[batch * n_tok, width], rng);
    let mut mask = Tensor::zeros(&[batch, n_tok, n_tok]);
    for q in 0..n_tok {
        mask.data[(n_tok + q) * n_tok + n_tok - 1] = -1e9;
    }
    let build = move |t: &mut Tape, v: &[Var]| {
        let m = t.constant(mask.clone());
        enc.forward(t, &v[..np], v[np], m, batch, n_tok)
    };
    out.push(composite("encoder", 1, check_gradients(&with_params(&ps, &[tokens]), &build, Coords::All, rng)?));

    // Small policy and critic: every parameter.
    let cfg = NetworkConfig {
        encoder: EncoderConfig { num_heads: 2, num_layers: 1, d_model: 4, feedforward: 6, output: 4 },
        mlp_hidden: vec![6, 5],
        ..Default::default()
    };
    let dims = NetDims { obs: 5, token: 3, actions: 2 };
    let b = sample_batch(&dims, 3, 3, rng)?;
    let mut pol = PolicyNet::new(&cfg, dims, rng)?;
    // lift the head out of its small init so the mean path carries real signal
    for x in pol.params.tensors_mut() {
        x.data.iter_mut().for_each(|v| *v += 0.1 * rng.random_range(-1.0..1.0));
    }
    let actions = rand_t(&[3, 2], rng);
    let (pb, pp) = (b.clone(), pol.clone());
    let build = move |t: &mut Tape, v: &[Var]| {
        let (mean, std) = pp.forward(t, v, &pb)?;
        let a = t.constant(actions.clone());
        let lp = gaussian_log_prob_tape(t, mean, std, a)?;
        let mf = t.reshape(mean, &[6])?;
        t.concat(&[lp, mf, std])
    };
    out.push(composite("policy_small", 1, check_gradients(&with_params(&pol.params, &[]), &build, Coords::All, rng)?));
    let critic = CriticNet::new(&cfg, dims, rng)?;
    let cc = critic.clone();
    let build = move |t: &mut Tape, v: &[Var]| cc.forward(t, v, &b);
    out.push(composite("critic_small", 1, check_gradients(&with_params(&critic.params, &[]), &build, Coords::All, rng)?));

    // Default architecture at the planar humanoid widths: sampled coordinates.
    let cfg = NetworkConfig::default();
    let dims = NetDims { obs: 135, token: 52, actions: 7 };
    let b = sample_batch(&dims, 6, 2, rng)?;
    let pol = PolicyNet::new(&cfg, dims, rng)?;
    let (pb, pp) = (b.clone(), pol.clone());
    let build = move |t: &mut Tape, v: &[Var]| {
        let (mean, std) = pp.forward(t, v, &pb)?;
        let mf = t.reshape(mean, &[14])?;
        t.concat(&[mf, std])
    };
    out.push(composite("policy_default", 1, check_gradients(&with_params(&pol.params, &[]), &build, Coords::PerTensor(3), rng)?));
    let critic = CriticNet::new(&cfg, dims, rng)?;
    let cc = critic.clone();
    let build = move |t: &mut Tape, v: &[Var]| cc.forward(t, v, &b);
    out.push(composite("critic_default", 1, check_gradients(&with_params(&critic.params, &[]), &build, Coords::PerTensor(3), rng)?));
    Ok(out)
}

/// Every op check followed by the composite checks.
pub fn run_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, gen) in op_cases() {
        out.push(run_op(name, gen, &mut rng)?);
    }
    out.extend(composite_checks(&mut rng)?);
    Ok(out)
}

/// Names of all ops covered by [`run_suite`].
pub fn op_names() -> Vec<&'static str> {
    op_cases().into_iter().map(|(n, _)| n).collect()
}
