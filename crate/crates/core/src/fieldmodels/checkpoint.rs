use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::signals::io::{read_container, write_container};

use super::{build, FieldModel, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

/// Sidecar describing a saved model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub seed: u64,
    pub params: Vec<TensorEntry>,
    pub frozen: Vec<TensorEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn write_tensor(dir: &Path, file: &str, t: &Tensor) -> Result<()> {
    write_container(&dir.join(file), t.shape(), 1, t.data())
}

/// Writes one native container per tensor plus `manifest.json` into `dir`.
///
/// Values are stored as 32-bit floats; frozen tensors are informational and
/// are regenerated from the seed on load.
pub fn save_checkpoint(dir: &Path, model: &dyn FieldModel) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir)?;
    let mut params = Vec::new();
    for (i, (name, t)) in model.param_names().into_iter().zip(model.params()).enumerate() {
        let file = format!("param{i:03}_{name}.inrb");
        write_tensor(dir, &file, t)?;
        params.push(TensorEntry {
            name,
            file,
            shape: t.shape().to_vec(),
        });
    }
    let mut frozen = Vec::new();
    for (i, (name, t)) in model.frozen().into_iter().enumerate() {
        let file = format!("frozen{i:03}_{name}.inrb");
        write_tensor(dir, &file, &t)?;
        frozen.push(TensorEntry {
            name,
            file,
            shape: t.shape().to_vec(),
        });
    }
    let manifest = CheckpointManifest {
        config: model.config().clone(),
        seed: model.seed(),
        params,
        frozen,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::build(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Box<dyn FieldModel>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        offset: 0,
        message: e.to_string(),
    })?;
    let mut model = build(&manifest.config, manifest.seed)?;
    if manifest.params.len() != model.params().len() {
        return Err(Error::build(format!(
            "checkpoint has {} tensors, model needs {}",
            manifest.params.len(),
            model.params().len()
        )));
    }
    for (entry, slot) in manifest.params.iter().zip(model.params_mut()) {
        let c = read_container(&dir.join(&entry.file))?;
        if c.extents != slot.shape() || c.channels != 1 {
            return Err(Error::build(format!(
                "tensor `{}` has shape {:?}, expected {:?}",
                entry.name,
                c.extents,
                slot.shape()
            )));
        }
        slot.data_mut().copy_from_slice(&c.values);
    }
    Ok(model)
}
