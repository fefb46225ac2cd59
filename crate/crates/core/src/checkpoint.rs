//! Versioned JSON checkpoints: networks (flat parameter vectors plus shape
//! manifests), optimizer states, seed, iteration counter, and the environment
//! configuration needed to rebuild the run. Round trips are bit-exact for all
//! finite parameter values.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::EnvConfig;
use crate::options::ExecutionStrategy;
use crate::trainer::{OptimStates, PolicyNets, TrainConfig};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub iteration: usize,
    pub strategy: ExecutionStrategy,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub nets: PolicyNets,
    pub optim: OptimStates,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let file = File::open(path)?;
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Invalid {
                what: "checkpoint",
                detail: format!(
                    "unsupported version {} (expected {CHECKPOINT_VERSION})",
                    ckpt.version
                ),
            });
        }
        Ok(ckpt)
    }

    /// Rejects a checkpoint whose networks do not match the given
    /// environment dimensions, naming the expected ones.
    pub fn validate_dims(
        &self,
        joint_obs_dim: usize,
        local_obs_dims: &[usize],
        option_counts: &[usize],
    ) -> Result<()> {
        if self.nets.option_counts != option_counts {
            return Err(Error::Invalid {
                what: "checkpoint",
                detail: format!(
                    "option counts {:?} do not match environment {:?}",
                    self.nets.option_counts, option_counts
                ),
            });
        }
        match self.nets.mode {
            crate::policy::PolicyMode::Centralized => {
                let got = self.nets.policy[0].input_dim();
                if got != joint_obs_dim {
                    return Err(Error::Invalid {
                        what: "checkpoint",
                        detail: format!(
                            "policy input dim {got} does not match joint observation dim {joint_obs_dim}"
                        ),
                    });
                }
            }
            crate::policy::PolicyMode::PartiallyCentralized => {
                for (a, net) in self.nets.policy.iter().enumerate() {
                    let want = local_obs_dims[a];
                    if net.input_dim() != want {
                        return Err(Error::Invalid {
                            what: "checkpoint",
                            detail: format!(
                                "agent {a} policy input dim {} does not match local observation dim {want}",
                                net.input_dim()
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}
