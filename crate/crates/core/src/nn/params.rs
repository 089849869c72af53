use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named, ordered parameter tensors of one network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Copies every tensor onto `tape` as a differentiable leaf.
    pub fn leaves(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Copies every tensor onto `tape` without gradient tracking.
    pub fn constants(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    /// Replaces all values from `other`, which must have identical names and shapes.
    pub fn assign(&mut self, other: &ParamSet) -> Result<()> {
        self.check_layout(&other.names, &other.tensors.iter().map(|t| t.shape.clone()).collect::<Vec<_>>())?;
        self.tensors.clone_from(&other.tensors);
        Ok(())
    }

    pub fn check_layout(&self, names: &[String], shapes: &[Vec<usize>]) -> Result<()> {
        if names.len() != self.names.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", self.names.len(), names.len())));
        }
        for ((n, s), (mine, t)) in names.iter().zip(shapes).zip(self.names.iter().zip(&self.tensors)) {
            if n != mine || *s != t.shape {
                return Err(Error::Checkpoint(format!("tensor `{n}` {s:?} does not match `{mine}` {:?}", t.shape)));
            }
        }
        Ok(())
    }

    /// Little-endian `f64` payload of all tensors in order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.num_scalars() * 8);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Fills values from a payload produced by [`Self::to_le_bytes`].
    pub fn load_le_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        if bytes.len() != self.num_scalars() * 8 {
            return Err(Error::Checkpoint(format!("payload holds {} bytes, expected {}", bytes.len(), self.num_scalars() * 8)));
        }
        let mut chunks = bytes.chunks_exact(8);
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8-byte chunk"));
            }
        }
        Ok(())
    }
}

/// Global 2-norm of a gradient list.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
}

/// Scales `grads` so their global norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flat_map(|g| g.data.iter_mut()).for_each(|v| *v *= s);
    }
    norm
}
