//! Checkpoint container.
//!
//! Layout: the 8-byte magic `SHDWCKPT`, the manifest length as a little-endian
//! `u64`, the manifest as UTF-8 JSON, then the raw little-endian `f64`
//! payload of every tensor in manifest order. The manifest carries the
//! SHA-256 of the payload.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::rl::{env_dims, Agent, CriticMode};
use crate::sim2d::EnvShared;

pub const MAGIC: &[u8; 8] = b"SHDWCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Position of a ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut r = ChaCha8Rng::from_seed(self.seed);
        r.set_stream(self.stream);
        r.set_word_pos(self.word_pos);
        r
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    pub mode: CriticMode,
    pub iteration: usize,
    pub lr: f64,
    pub tensors: Vec<TensorEntry>,
    pub payload_len: u64,
    pub payload_sha256: String,
    pub rng: Vec<RngState>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub payload: Vec<u8>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn from_agent(agent: &Agent, config: &RunConfig, iteration: usize, rng: &[&ChaCha8Rng]) -> Self {
        let mut tensors = Vec::new();
        let mut payload = Vec::new();
        for (prefix, ps) in agent.named_params() {
            for (name, t) in ps.names().iter().zip(ps.tensors()) {
                tensors.push(TensorEntry { name: format!("{prefix}/{name}"), shape: t.shape.clone() });
            }
            payload.extend(ps.to_le_bytes());
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            dtype: "f64".into(),
            mode: agent.mode,
            iteration,
            lr: agent.lr,
            tensors,
            payload_len: payload.len() as u64,
            payload_sha256: sha256_hex(&payload),
            rng: rng.iter().map(|r| RngState::capture(r)).collect(),
            config: config.clone(),
        };
        Checkpoint { manifest, payload }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(16 + m.len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(m.len() as u64).to_le_bytes());
        out.extend_from_slice(&m);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("missing SHDWCKPT magic".into()));
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let mend = 16u64.checked_add(mlen).filter(|&e| e <= bytes.len() as u64).ok_or_else(|| Error::Checkpoint("manifest length exceeds file".into()))? as usize;
        let manifest: Manifest =
            serde_json::from_slice(&bytes[16..mend]).map_err(|e| Error::Checkpoint(format!("malformed manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {}", manifest.format_version)));
        }
        if manifest.dtype != "f64" {
            return Err(Error::Checkpoint(format!("unsupported dtype `{}`", manifest.dtype)));
        }
        let payload = bytes[mend..].to_vec();
        if payload.len() as u64 != manifest.payload_len {
            return Err(Error::Checkpoint(format!("payload holds {} bytes, manifest says {}", payload.len(), manifest.payload_len)));
        }
        let expected: u64 = manifest.tensors.iter().map(|t| t.shape.iter().product::<usize>() as u64 * 8).sum();
        if expected != manifest.payload_len {
            return Err(Error::Checkpoint(format!("tensor shapes need {expected} bytes, payload has {}", manifest.payload_len)));
        }
        let hash = sha256_hex(&payload);
        if hash != manifest.payload_sha256 {
            return Err(Error::Checkpoint(format!("payload hash mismatch: manifest {}, actual {hash}", manifest.payload_sha256)));
        }
        Ok(Checkpoint { manifest, payload })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Rebuilds the agent described by the manifest and fills its weights.
    /// Optimizer moments are not stored and start from zero.
    pub fn restore_agent(&self, shared: &EnvShared) -> Result<Agent> {
        let cfg = &self.manifest.config;
        let dims = env_dims(shared);
        let mut agent = Agent::new(&cfg.network, dims, &cfg.ppo, self.manifest.mode, cfg.seed)?;
        agent.lr = self.manifest.lr;
        let mut offset = 0usize;
        let mut entries = self.manifest.tensors.iter();
        let prefixes: Vec<String> = agent.named_params().into_iter().map(|(p, _)| p).collect();
        for (prefix, ps) in prefixes.iter().zip(agent.param_sets_mut()) {
            let mine: Vec<&TensorEntry> = entries.by_ref().take(ps.len()).collect();
            let names: Vec<String> = mine.iter().map(|e| e.name.strip_prefix(&format!("{prefix}/")).unwrap_or(&e.name).to_string()).collect();
            let shapes: Vec<Vec<usize>> = mine.iter().map(|e| e.shape.clone()).collect();
            ps.check_layout(&names, &shapes).map_err(|e| match e {
                Error::Checkpoint(m) => Error::dim(format!("checkpoint layout ({m})"), ps.num_scalars(), shapes.iter().map(|s| s.iter().product::<usize>()).sum()),
                e => e,
            })?;
            let n = ps.num_scalars() * 8;
            ps.load_le_bytes(&self.payload[offset..offset + n])?;
            offset += n;
        }
        if entries.next().is_some() || offset != self.payload.len() {
            return Err(Error::Checkpoint("checkpoint holds more tensors than the agent".into()));
        }
        Ok(agent)
    }
}
