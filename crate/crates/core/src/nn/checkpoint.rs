//! Versioned JSON parameter checkpoints: a header (format, version, kind,
//! seed, free-form metadata) followed by named row-major tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Module;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "reorient-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub seed: u64,
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_module<M: Module>(kind: &str, seed: u64, meta: serde_json::Value, module: &M) -> Self {
        let tensors = module
            .params()
            .into_iter()
            .map(|p| TensorRecord { name: p.name, shape: p.shape, values: p.data.to_vec() })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: kind.into(),
            seed,
            meta,
            tensors,
        }
    }

    /// Copies tensors into `module`, checking names and shapes one by one.
    pub fn load_into<M: Module>(&self, module: &mut M) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible(format!(
                "format {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                self.format, self.version
            )));
        }
        let expected: Vec<(String, Vec<usize>)> =
            module.params().into_iter().map(|p| (p.name, p.shape)).collect();
        if expected.len() != self.tensors.len() {
            return Err(Error::Incompatible(format!(
                "{} tensors in checkpoint, model has {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(self.tensors.iter()) {
            if *name != t.name || *shape != t.shape {
                return Err(Error::Incompatible(format!(
                    "tensor `{}` {:?} does not match model `{name}` {shape:?}",
                    t.name, t.shape
                )));
            }
            if t.values.len() != shape.iter().product::<usize>() {
                return Err(Error::Incompatible(format!("tensor `{}` has wrong value count", t.name)));
            }
        }
        for (dst, t) in module.params_mut().into_iter().zip(self.tensors.iter()) {
            dst.copy_from_slice(&t.values);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self)?;
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}
