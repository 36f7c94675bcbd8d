//! Parameter checkpoints.
//!
//! Format (JSON, version `EHCP1`):
//!
//! ```text
//! {"magic": "EHCP1",
//!  "params": {"<name>": {"shape": [rows, cols], "values": [f64, ...]}, ...},
//!  "extra": <any JSON, e.g. model config and batch-norm running statistics>}
//! ```
//!
//! Values are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "EHCP1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub params: BTreeMap<String, StoredTensor>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, extra: serde_json::Value) -> Self {
        let params = store
            .iter()
            .map(|(_, name, t)| {
                (
                    name.to_string(),
                    StoredTensor {
                        shape: [t.rows(), t.cols()],
                        values: t.data().to_vec(),
                    },
                )
            })
            .collect();
        Checkpoint {
            magic: CHECKPOINT_MAGIC.to_string(),
            params,
            extra,
        }
    }

    /// Overwrites every parameter of `store` with the stored value of the same
    /// name. Missing names and shape differences are errors.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint has {} tensors, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let stored = self
                .params
                .get(&name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("missing tensor {name}")))?;
            let [r, c] = stored.shape;
            if store.get(id).shape() != (r, c) {
                return Err(Error::CheckpointMismatch(format!(
                    "{name}: stored shape {r}x{c}, model expects {:?}",
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = Tensor::from_vec(r, c, stored.values.clone())
                .map_err(|e| Error::CheckpointMismatch(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.magic != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointMismatch(format!(
                "bad magic {:?}, expected {CHECKPOINT_MAGIC:?}",
                ckpt.magic
            )));
        }
        Ok(ckpt)
    }
}
