//! Round checkpoints: one little-endian f32 file per named tensor plus a
//! manifest carrying the architecture, seed, round and a checksum.

use std::path::{Path, PathBuf};

use fedssl_core::model::{ArchitectureSpec, NamedTensor, ParameterSet, Submodel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::{create_dir, f32_from_le_bytes, read_bytes, read_json, sha256_hex, write_bytes, write_json};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: Submodel,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub round: usize,
    pub seed: u64,
    pub method: String,
    pub arch: ArchitectureSpec,
    pub tensors: Vec<TensorEntry>,
    /// sha256 of all tensors as concatenated little-endian f32.
    pub checksum: String,
}

/// Digest of the parameters as stored on disk.
pub fn checksum(params: &ParameterSet) -> String {
    sha256_hex(&params.to_f32_le_bytes())
}

/// `checkpoints/round-007`.
pub fn round_dir(checkpoints: &Path, round: usize) -> PathBuf {
    checkpoints.join(format!("round-{round:03}"))
}

pub fn save(
    dir: &Path,
    params: &ParameterSet,
    arch: &ArchitectureSpec,
    seed: u64,
    round: usize,
    method: &str,
) -> Result<CheckpointManifest> {
    create_dir(dir)?;
    let mut tensors = Vec::with_capacity(params.tensors().len());
    for t in params.tensors() {
        let file = format!("{}.f32", t.name);
        let bytes: Vec<u8> = t.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        write_bytes(&dir.join(&file), &bytes)?;
        tensors.push(TensorEntry { name: t.name.clone(), group: t.group, shape: t.shape.clone(), trainable: t.trainable, file });
    }
    let manifest =
        CheckpointManifest { round, seed, method: method.to_string(), arch: arch.clone(), tensors, checksum: checksum(params) };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<(CheckpointManifest, ParameterSet)> {
    let manifest: CheckpointManifest = read_json(&dir.join(MANIFEST))?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let path = dir.join(&e.file);
        let values = f32_from_le_bytes(&path, &read_bytes(&path)?)?;
        if values.len() != e.shape.iter().product::<usize>() {
            return Err(Error::Data(format!("{}: {} values for shape {:?}", path.display(), values.len(), e.shape)));
        }
        tensors.push(NamedTensor {
            name: e.name.clone(),
            group: e.group,
            shape: e.shape.clone(),
            trainable: e.trainable,
            data: values.into_iter().map(f64::from).collect(),
        });
    }
    let params = ParameterSet::new(tensors);
    if checksum(&params) != manifest.checksum {
        return Err(Error::Data(format!("{}: checksum mismatch", dir.display())));
    }
    Ok((manifest, params))
}

/// Highest round with a complete checkpoint under `checkpoints`.
pub fn latest(checkpoints: &Path) -> Result<Option<usize>> {
    let entries = match std::fs::read_dir(checkpoints) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(checkpoints, e)),
    };
    let mut best = None;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(checkpoints, e))?;
        let name = entry.file_name();
        let round = name.to_str().and_then(|n| n.strip_prefix("round-")).and_then(|r| r.parse::<usize>().ok());
        if let Some(r) = round {
            if entry.path().join(MANIFEST).is_file() {
                best = best.max(Some(r));
            }
        }
    }
    Ok(best)
}

/// Total bytes of the files in a checkpoint directory.
pub fn size_on_disk(dir: &Path) -> Result<u64> {
    let mut total = 0;
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        total += entry.metadata().map_err(|e| Error::io(entry.path(), e))?.len();
    }
    Ok(total)
}
