//! Run configuration: one JSON document with every section of the stack.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::KinematicChain;
use crate::motion::{gen_motion, load_motion_file, GenParams, MotionKind, MotionTrajectory, RewardConfig, TerminationConfig};
use crate::nn::NetworkConfig;
use crate::rl::PPOConfig;
use crate::sim2d::{EnvConfig, EnvShared};

/// Reference motion: a file, or a generator kind with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSource {
    pub file: Option<String>,
    pub kind: Option<MotionKind>,
    pub params: GenParams,
}

impl Default for MotionSource {
    fn default() -> Self {
        Self { file: None, kind: Some(MotionKind::GetUp2d), params: GenParams::default() }
    }
}

impl MotionSource {
    pub fn validate(&self) -> Result<()> {
        match (&self.file, &self.kind) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(Error::schema("motion", "set exactly one of `file` and `kind`")),
        }
    }

    pub fn load(&self, chain: &KinematicChain) -> Result<MotionTrajectory> {
        self.validate()?;
        match (&self.file, self.kind) {
            (Some(f), _) => load_motion_file(Path::new(f)),
            (None, Some(k)) => gen_motion(k, chain, &self.params),
            _ => unreachable!("validated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub termination: TerminationConfig,
    pub network: NetworkConfig,
    pub ppo: PPOConfig,
    pub motion: MotionSource,
    pub seed: u64,
    pub out_dir: String,
    pub iterations: usize,
    /// Write a checkpoint every this many iterations; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            reward: RewardConfig::default(),
            termination: TerminationConfig::default(),
            network: NetworkConfig::default(),
            ppo: PPOConfig::default(),
            motion: MotionSource::default(),
            seed: 0,
            out_dir: "runs/default".into(),
            iterations: 1500,
            checkpoint_every: 100,
        }
    }
}

fn is_bundled_chain(name: &str) -> bool {
    matches!(name, "planar2" | "planar5")
}

fn resolve(base: &Path, p: &str) -> String {
    let path = Path::new(p);
    if path.is_absolute() {
        p.to_string()
    } else {
        base.join(path).to_string_lossy().into_owned()
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::schema(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        Ok(cfg)
    }

    /// Parses `path`, resolves relative file references against its
    /// directory and validates everything.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if !is_bundled_chain(&cfg.env.chain) {
            cfg.env.chain = resolve(&base, &cfg.env.chain);
        }
        if let Some(f) = &cfg.motion.file {
            cfg.motion.file = Some(resolve(&base, f));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_bundled_chain(&self.env.chain) && !Path::new(&self.env.chain).is_file() {
            return Err(Error::schema("env.chain", format!("chain file `{}` does not exist", self.env.chain)));
        }
        self.motion.validate()?;
        if let Some(f) = &self.motion.file {
            if !Path::new(f).is_file() {
                return Err(Error::schema("motion.file", format!("motion file `{f}` does not exist")));
            }
        }
        let chain = self.env.load_chain()?;
        self.env.validate(&chain)?;
        self.reward.validate()?;
        self.termination.validate()?;
        self.network.validate()?;
        self.ppo.validate()?;
        if self.iterations == 0 {
            return Err(Error::schema("iterations", "must be >= 1"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Chain, motion and shared environment data.
    pub fn build_env(&self) -> Result<Arc<EnvShared>> {
        let chain = self.env.load_chain()?;
        let traj = self.motion.load(&chain)?;
        self.build_env_with(chain, &traj)
    }

    pub fn build_env_with(&self, chain: KinematicChain, traj: &MotionTrajectory) -> Result<Arc<EnvShared>> {
        EnvShared::new(chain, traj, self.env.clone(), self.reward.clone(), self.termination.clone())
    }
}
