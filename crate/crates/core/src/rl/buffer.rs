use crate::error::{Error, Result};
use crate::nn::{NetDims, ObsBatch, ObsRef};
use crate::sim2d::Observation;

/// One rollout of `T` steps from `N` environments, stored `[T, N]` row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub max_tokens: usize,
    pub obs: Vec<Observation>,
    /// `[T·N, n_actions]`.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Policy mean at collection time, `[T·N, n_actions]`.
    pub means: Vec<f64>,
    pub std: Vec<f64>,
    pub rewards: Vec<[f64; 3]>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    /// `[critic][T·N]`.
    pub values: Vec<Vec<f64>>,
    /// Value bootstrapped into each step's TD error: `V(s_{t+1})`, the value
    /// of the pre-reset observation after a truncation, or `0` after a termination.
    pub next_values: Vec<Vec<f64>>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, max_tokens: usize, n_critics: usize) -> Self {
        RolloutBuffer { n_envs, max_tokens, values: vec![Vec::new(); n_critics], next_values: vec![Vec::new(); n_critics], ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.len() / self.n_envs.max(1)
    }

    pub fn dones(&self) -> Vec<bool> {
        self.terminated.iter().zip(&self.truncated).map(|(a, b)| *a || *b).collect()
    }

    /// Every stored observation as one padded batch.
    pub fn obs_batch(&self, dims: &NetDims) -> Result<ObsBatch> {
        let refs: Vec<ObsRef<'_>> = self.obs.iter().map(|o| ObsRef { proprio: &o.proprio, tokens: &o.tokens, n_tokens: o.n_tokens }).collect();
        ObsBatch::new(&refs, dims, self.max_tokens)
    }

    /// Checks the `[T, N]` layout of every array.
    pub fn validate(&self, n_actions: usize) -> Result<()> {
        let n = self.len();
        if self.n_envs == 0 || n % self.n_envs != 0 {
            return Err(Error::dim("rollout env count", self.n_envs, n));
        }
        for (what, len) in [
            ("rollout observations", self.obs.len()),
            ("rollout rewards", self.rewards.len()),
            ("rollout terminated flags", self.terminated.len()),
            ("rollout truncated flags", self.truncated.len()),
        ] {
            if len != n {
                return Err(Error::dim(what, n, len));
            }
        }
        if self.actions.len() != n * n_actions || self.means.len() != n * n_actions {
            return Err(Error::dim("rollout actions", n * n_actions, self.actions.len()));
        }
        for v in self.values.iter().chain(&self.next_values) {
            if v.len() != n {
                return Err(Error::dim("rollout values", n, v.len()));
            }
        }
        Ok(())
    }
}
