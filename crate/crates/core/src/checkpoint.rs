//! Model checkpoints: a TOML manifest plus a flat little-endian f64 blob.
//!
//! The manifest echoes the model configuration and lists every parameter path
//! with its shape, in the order the values are concatenated in the blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{DenseArray, ParamStore};
use crate::model::{Alcir, ModelConfig};
use crate::scalar::Scalar;

pub const FORMAT: &str = "alcir-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub path: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub model: ModelConfig,
    pub params: Vec<ParamEntry>,
}

/// `model.toml` → `model.bin`.
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn save_checkpoint<T: Scalar>(model: &Alcir<T>, manifest_path: &Path) -> Result<()> {
    let blob = blob_path(manifest_path);
    let blob_name = blob
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Checkpoint(format!("bad checkpoint path {}", manifest_path.display())))?
        .to_string();
    let params = model
        .params()
        .iter()
        .map(|(_, path, a)| ParamEntry {
            path: path.to_string(),
            shape: a.shape().to_vec(),
        })
        .collect();
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        blob: blob_name,
        model: model.config().clone(),
        params,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Checkpoint(format!("serializing manifest: {e}")))?;

    let mut bytes = Vec::with_capacity(model.params().iter().map(|(_, _, a)| a.len() * 8).sum());
    for (_, _, a) in model.params().iter() {
        for v in a.as_slice() {
            bytes.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    if let Some(dir) = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&blob, bytes).map_err(|e| Error::io(&blob, e))?;
    fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))
}

pub fn read_manifest(manifest_path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!("unknown checkpoint format `{}`", manifest.format)));
    }
    if manifest.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {} is not supported (expected {VERSION})",
            manifest.version
        )));
    }
    Ok(manifest)
}

/// Rebuilds the model from the echoed config and fills in the stored values.
pub fn load_checkpoint<T: Scalar>(manifest_path: &Path) -> Result<Alcir<T>> {
    let manifest = read_manifest(manifest_path)?;
    let mut model = Alcir::<T>::new(manifest.model.clone(), 0)?;
    let expected: Vec<ParamEntry> = model
        .params()
        .iter()
        .map(|(_, path, a)| ParamEntry {
            path: path.to_string(),
            shape: a.shape().to_vec(),
        })
        .collect();
    if expected != manifest.params {
        return Err(Error::Checkpoint(
            "parameter list does not match the model described by the manifest".into(),
        ));
    }

    let blob = manifest_path.with_file_name(&manifest.blob);
    let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
    let total: usize = expected.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if bytes.len() != total * 8 {
        return Err(Error::Checkpoint(format!(
            "{}: {} bytes, expected {}",
            blob.display(),
            bytes.len(),
            total * 8
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut store = ParamStore::new(model.params().rng_seed());
    for entry in &manifest.params {
        let n = entry.shape.iter().product();
        let data: Vec<T> = values.by_ref().take(n).map(T::lit).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("non-finite value in `{}`", entry.path)));
        }
        store.insert(&entry.path, DenseArray::new(entry.shape.clone(), data)?)?;
    }
    model.load_params(store)?;
    Ok(model)
}
