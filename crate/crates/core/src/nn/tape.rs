//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Every op evaluates eagerly and appends one node; [`Tape::backward`] walks
//! the nodes once in reverse creation order, which is a topological order.

use std::fmt;
use std::sync::Arc;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub usize);

/// Backward rule of a custom op: `(inputs, output, output grad) -> input grads`.
pub type CustomBackward = Arc<dyn Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Tensor> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Relu,
    /// `α = 1`.
    Elu,
    /// Tanh approximation `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    Gelu,
    Tanh,
    Exp,
    Log,
    Square,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Bmm { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    Softmax(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    Unary(Var, Unary),
    Clamp { x: Var, lo: f64, hi: f64 },
    Minimum(Var, Var),
    GatherRows { x: Var, idx: Vec<usize> },
    Reshape(Var),
    Custom { inputs: Vec<Var>, backward: CustomBackward },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.len()).finish()
    }
}

/// Gradients of one backward pass, indexed by node.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Grads {
    /// Gradient of `v`; zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor { shape, data: g.clone() },
            None => Tensor::zeros(&shape),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match self.grads[v.0].take() {
            Some(data) => Tensor { shape, data },
            None => Tensor::zeros(&shape),
        }
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape { op, lhs: a.shape.clone(), rhs: b.shape.clone() }
}

/// `c[m,n] (+)= a·b` with explicit strides; transposes are free.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: isize, csa: isize, b: &[f64], rsb: isize, csb: isize, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: the caller passes slices holding an m×k, k×n and m×n matrix for the given strides.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

/// True when `b` broadcasts against `a` as a trailing-axes suffix or a scalar.
fn broadcasts(a: &[usize], b: &[usize]) -> bool {
    let nb: usize = b.iter().product();
    nb == 1 || (b.len() <= a.len() && a[a.len() - b.len()..] == *b)
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044715;

fn unary_fwd(kind: Unary, x: f64) -> f64 {
    match kind {
        Unary::Relu => x.max(0.0),
        Unary::Elu => {
            if x > 0.0 {
                x
            } else {
                x.exp_m1()
            }
        }
        Unary::Gelu => 0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh()),
        Unary::Tanh => x.tanh(),
        Unary::Exp => x.exp(),
        Unary::Log => x.ln(),
        Unary::Square => x * x,
    }
}

fn unary_grad(kind: Unary, x: f64, y: f64) -> f64 {
    match kind {
        Unary::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Unary::Elu => {
            if x > 0.0 {
                1.0
            } else {
                y + 1.0
            }
        }
        Unary::Gelu => {
            let t = (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh();
            0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x)
        }
        Unary::Tanh => 1.0 - y * y,
        Unary::Exp => y,
        Unary::Log => 1.0 / x,
        Unary::Square => 2.0 * x,
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Input without gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// `[m,k]·[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &ta.data, k as isize, 1, &tb.data, n as isize, 1, 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul(a, b), rg))
    }

    /// Batched `[B,m,k]·[B,k,n]`, or `[B,m,k]·[B,n,k]ᵀ` with `trans_b`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 3 || tb.shape.len() != 3 || ta.shape[0] != tb.shape[0] {
            return Err(shape_err("bmm", ta, tb));
        }
        let (bs, m, k) = (ta.shape[0], ta.shape[1], ta.shape[2]);
        let (kb, n) = if trans_b { (tb.shape[2], tb.shape[1]) } else { (tb.shape[1], tb.shape[2]) };
        if kb != k {
            return Err(shape_err("bmm", ta, tb));
        }
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            let sa = &ta.data[i * m * k..(i + 1) * m * k];
            let sb = &tb.data[i * k * n..(i + 1) * k * n];
            let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
            gemm(m, k, n, sa, k as isize, 1, sb, rsb, csb, 0.0, &mut out[i * m * n..(i + 1) * m * n]);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape: vec![bs, m, n], data: out }, Op::Bmm { a, b, trans_b }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !broadcasts(&ta.shape, &tb.shape) {
            return Err(shape_err(name, ta, tb));
        }
        let nb = tb.numel();
        let data = ta.data.iter().enumerate().map(|(i, &x)| f(x, tb.data[i % nb])).collect();
        Ok(Tensor { shape: ta.shape.clone(), data })
    }

    /// `a + b`, `b` broadcast over leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor { shape: ta.shape.clone(), data: ta.data.iter().map(|x| x * c).collect() };
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, c), rg)
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self.value(*xs.first().ok_or_else(|| Error::Config("concat of zero tensors".into()))?);
        let lead = &first.shape[..first.shape.len().saturating_sub(1)];
        let rows = first.rows();
        for &x in xs {
            let t = self.value(x);
            if t.shape.len() != first.shape.len() || &t.shape[..t.shape.len() - 1] != lead {
                return Err(shape_err("concat", first, t));
            }
        }
        let widths: Vec<usize> = xs.iter().map(|&x| self.value(x).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&x, &w) in xs.iter().zip(&widths) {
                data.extend_from_slice(&self.value(x).data[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let rg = xs.iter().any(|&x| self.rg(x));
        Ok(self.push(Tensor { shape, data }, Op::Concat(xs.to_vec()), rg))
    }

    /// Columns `start..end` of the last axis.
    pub fn slice(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let c = t.cols();
        if t.shape.is_empty() || start > end || end > c {
            return Err(Error::Shape { op: "slice", lhs: t.shape.clone(), rhs: vec![start, end] });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(t.rows() * w);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.data[r * c + start..r * c + end]);
        }
        let mut shape = t.shape.clone();
        *shape.last_mut().unwrap() = w;
        let rg = self.rg(x);
        Ok(self.push(Tensor { shape, data }, Op::Slice { x, start }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data.iter().sum::<f64>() / t.numel().max(1) as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Sum over the last axis.
    pub fn sum_last(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let data = (0..t.rows()).map(|r| t.data[r * c..(r + 1) * c].iter().sum()).collect();
        let shape = t.shape[..t.shape.len().saturating_sub(1)].to_vec();
        let rg = self.rg(x);
        self.push(Tensor { shape, data }, Op::SumLast(x), rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let mut data = t.data.clone();
        for row in data.chunks_mut(c.max(1)) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let shape = t.shape.clone();
        let rg = self.rg(x);
        self.push(Tensor { shape, data }, Op::Softmax(x), rg)
    }

    /// Normalization over the last axis without affine terms.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let mut data = t.data.clone();
        let mut inv_std = Vec::with_capacity(t.rows());
        for row in data.chunks_mut(c.max(1)) {
            let n = row.len() as f64;
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mu) * is);
            inv_std.push(is);
        }
        let shape = t.shape.clone();
        let rg = self.rg(x);
        self.push(Tensor { shape, data }, Op::LayerNorm { x, inv_std }, rg)
    }

    pub fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let t = self.value(x);
        let data = t.data.iter().map(|&v| unary_fwd(kind, v)).collect();
        let shape = t.shape.clone();
        let rg = self.rg(x);
        self.push(Tensor { shape, data }, Op::Unary(x, kind), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Elu)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Gelu)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Log)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Square)
    }

    /// Elementwise clamp to `[lo, hi]`; the gradient is zero where clamped.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let t = self.value(x);
        let data = t.data.iter().map(|v| v.clamp(lo, hi)).collect();
        let shape = t.shape.clone();
        let rg = self.rg(x);
        self.push(Tensor { shape, data }, Op::Clamp { x, lo, hi }, rg)
    }

    pub fn clamp_min(&mut self, x: Var, lo: f64) -> Var {
        self.clamp(x, lo, f64::INFINITY)
    }

    /// Elementwise minimum of equal-shape tensors; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(shape_err("minimum", ta, tb));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x.min(*y)).collect();
        let shape = ta.shape.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape, data }, Op::Minimum(a, b), rg))
    }

    /// Rows `idx` of `x` viewed as `[rows, cols]`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let c = t.cols();
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::Shape { op: "gather_rows", lhs: t.shape.clone(), rhs: vec![bad] });
        }
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(&t.data[i * c..(i + 1) * c]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor { shape: vec![idx.len(), c], data }, Op::GatherRows { x, idx: idx.to_vec() }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(Error::Shape { op: "reshape", lhs: t.shape.clone(), rhs: shape.to_vec() });
        }
        let t = Tensor { shape: shape.to_vec(), data: t.data.clone() };
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Records an op evaluated outside the tape together with its backward rule.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, backward: CustomBackward) -> Var {
        let rg = inputs.iter().any(|&x| self.rg(x));
        self.push(output, Op::Custom { inputs: inputs.to_vec(), backward }, rg)
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::Shape { op: "backward", lhs: lt.shape.clone(), rhs: vec![1] });
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.backprop(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        let shapes = self.nodes[..n].iter().map(|nd| nd.value.shape.clone()).collect();
        Ok(Grads { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: impl FnOnce(&mut Vec<f64>)) {
        if !self.rg(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        g(slot);
    }

    fn backprop(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                // dA = G·Bᵀ, dB = Aᵀ·G
                self.accumulate(grads, *a, |s| gemm(m, n, k, g, n as isize, 1, &tb.data, 1, n as isize, 1.0, s));
                self.accumulate(grads, *b, |s| gemm(k, m, n, &ta.data, 1, k as isize, g, n as isize, 1, 1.0, s));
            }
            Op::Bmm { a, b, trans_b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (bs, m, k) = (ta.shape[0], ta.shape[1], ta.shape[2]);
                let n = out.shape[2];
                self.accumulate(grads, *a, |s| {
                    for i in 0..bs {
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let sb = &tb.data[i * k * n..(i + 1) * k * n];
                        // dA = G·Bᵀ (B stored k×n) or G·B (B stored n×k)
                        let (rsb, csb) = if *trans_b { (k as isize, 1) } else { (1, n as isize) };
                        gemm(m, n, k, gi, n as isize, 1, sb, rsb, csb, 1.0, &mut s[i * m * k..(i + 1) * m * k]);
                    }
                });
                self.accumulate(grads, *b, |s| {
                    for i in 0..bs {
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let sa = &ta.data[i * m * k..(i + 1) * m * k];
                        let dst = &mut s[i * k * n..(i + 1) * k * n];
                        if *trans_b {
                            // dB[n,k] = Gᵀ·A
                            gemm(n, m, k, gi, 1, n as isize, sa, k as isize, 1, 1.0, dst);
                        } else {
                            // dB[k,n] = Aᵀ·G
                            gemm(k, m, n, sa, 1, k as isize, gi, n as isize, 1, 1.0, dst);
                        }
                    }
                });
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                self.accumulate(grads, *a, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                let nb = self.value(*b).numel();
                self.accumulate(grads, *b, |s| {
                    for (i, y) in g.iter().enumerate() {
                        s[i % nb] += sign * y;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let nb = tb.numel();
                self.accumulate(grads, *a, |s| {
                    for (i, y) in g.iter().enumerate() {
                        s[i] += y * tb.data[i % nb];
                    }
                });
                self.accumulate(grads, *b, |s| {
                    for (i, y) in g.iter().enumerate() {
                        s[i % nb] += y * ta.data[i];
                    }
                });
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)),
            Op::Concat(xs) => {
                let total = out.cols();
                let mut off = 0;
                for &x in xs {
                    let w = self.value(x).cols();
                    self.accumulate(grads, x, |s| {
                        for r in 0..out.rows() {
                            for j in 0..w {
                                s[r * w + j] += g[r * total + off + j];
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::Slice { x, start } => {
                let c = self.value(*x).cols();
                let w = out.cols();
                self.accumulate(grads, *x, |s| {
                    for r in 0..out.rows() {
                        for j in 0..w {
                            s[r * c + start + j] += g[r * w + j];
                        }
                    }
                });
            }
            Op::Sum(x) => self.accumulate(grads, *x, |s| s.iter_mut().for_each(|v| *v += g[0])),
            Op::Mean(x) => {
                let n = self.value(*x).numel().max(1) as f64;
                self.accumulate(grads, *x, |s| s.iter_mut().for_each(|v| *v += g[0] / n));
            }
            Op::SumLast(x) => {
                let c = self.value(*x).cols();
                self.accumulate(grads, *x, |s| {
                    for (i, v) in s.iter_mut().enumerate() {
                        *v += g[i / c];
                    }
                });
            }
            Op::Softmax(x) => {
                let c = out.cols();
                self.accumulate(grads, *x, |s| {
                    for r in 0..out.rows() {
                        let y = &out.data[r * c..(r + 1) * c];
                        let gy = &g[r * c..(r + 1) * c];
                        let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            s[r * c + j] += y[j] * (gy[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, inv_std } => {
                let c = out.cols();
                let n = c as f64;
                self.accumulate(grads, *x, |s| {
                    for r in 0..out.rows() {
                        let y = &out.data[r * c..(r + 1) * c];
                        let gy = &g[r * c..(r + 1) * c];
                        let mg = gy.iter().sum::<f64>() / n;
                        let mgy = y.iter().zip(gy).map(|(a, b)| a * b).sum::<f64>() / n;
                        for j in 0..c {
                            s[r * c + j] += inv_std[r] * (gy[j] - mg - y[j] * mgy);
                        }
                    }
                });
            }
            Op::Unary(x, kind) => {
                let tx = self.value(*x);
                self.accumulate(grads, *x, |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * unary_grad(*kind, tx.data[i], out.data[i]);
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let tx = self.value(*x);
                self.accumulate(grads, *x, |s| {
                    for i in 0..s.len() {
                        let v = tx.data[i];
                        if v >= *lo && v <= *hi {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::Minimum(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |s| {
                    for i in 0..s.len() {
                        if ta.data[i] <= tb.data[i] {
                            s[i] += g[i];
                        }
                    }
                });
                self.accumulate(grads, *b, |s| {
                    for i in 0..s.len() {
                        if ta.data[i] > tb.data[i] {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::GatherRows { x, idx } => {
                let c = out.cols();
                self.accumulate(grads, *x, |s| {
                    for (r, &i) in idx.iter().enumerate() {
                        for j in 0..c {
                            s[i * c + j] += g[r * c + j];
                        }
                    }
                });
            }
            Op::Reshape(x) => self.accumulate(grads, *x, |s| s.iter_mut().zip(g).for_each(|(a, b)| *a += b)),
            Op::Custom { inputs, backward } => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let gt = Tensor { shape: out.shape.clone(), data: g.to_vec() };
                let gs = backward(&ins, out, &gt);
                for (&v, gi) in inputs.iter().zip(gs) {
                    self.accumulate(grads, v, |s| s.iter_mut().zip(&gi.data).for_each(|(a, b)| *a += b));
                }
            }
        }
    }
}
