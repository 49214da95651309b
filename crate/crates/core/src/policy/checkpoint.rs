//! JSON checkpoints: architecture plus one entry per tensor
//! (`name`, `shape`, row-major `values`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, InputSpec, NetConfig, PolicyParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "crowd-policy/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub net: NetConfig,
    pub input: InputSpec,
    pub tensors: Vec<Tensor>,
}

impl PolicyParams {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let tensors = self
            .arch
            .layout
            .segments
            .iter()
            .map(|s| Tensor { name: s.name.clone(), shape: s.shape.clone(), values: self.theta[s.range()].to_vec() })
            .collect();
        Checkpoint { format: CHECKPOINT_FORMAT.into(), net: self.arch.net.clone(), input: self.arch.input, tensors }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ckpt.format)));
        }
        let arch = Architecture::new(&ckpt.net, ckpt.input)?;
        if ckpt.tensors.len() != arch.layout.segments.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors, architecture has {}",
                ckpt.tensors.len(),
                arch.layout.segments.len()
            )));
        }
        let mut theta = vec![0.0; arch.n_params()];
        for (seg, t) in arch.layout.segments.iter().zip(&ckpt.tensors) {
            if seg.name != t.name || seg.shape != t.shape || t.values.len() != seg.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?} {:?} does not match expected {:?} {:?}",
                    t.name, t.shape, seg.name, seg.shape
                )));
            }
            theta[seg.range()].copy_from_slice(&t.values);
        }
        Ok(Self { arch, theta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::from_checkpoint(&ckpt)
    }
}
