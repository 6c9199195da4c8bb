//! Versioned JSON checkpoints. Floats are written with round-trip
//! precision, so loading restores every parameter bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::sid::Learner;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: Config,
    pub seed: u64,
    pub env_steps: u64,
    pub episodes: u64,
    pub learner: Learner,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

impl Checkpoint {
    pub fn new(config: Config, seed: u64, env_steps: u64, episodes: u64, learner: Learner) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config,
            seed,
            env_steps,
            episodes,
            learner,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: probe.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
