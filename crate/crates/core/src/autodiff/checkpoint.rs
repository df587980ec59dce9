use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParameterSet, Role, Tensor};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: Role,
    pub regularized: bool,
    /// Blob file name relative to the checkpoint directory.
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub tensors: Vec<CheckpointEntry>,
}

fn blob_name(index: usize, name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '.' })
        .collect();
    format!("{index:03}_{safe}.bin")
}

/// Writes `manifest.json` plus one little-endian f64 blob per tensor into `dir`.
pub fn write_checkpoint(params: &ParameterSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::with_capacity(params.len());
    for (i, p) in params.iter().enumerate() {
        let file = blob_name(i, &p.name);
        let mut bytes = Vec::with_capacity(p.value.len() * 8);
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        tensors.push(CheckpointEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            role: p.role,
            regularized: p.regularized,
            file,
        });
    }
    let manifest = CheckpointManifest { format: "f64-le".into(), tensors };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_checkpoint(dir: &Path) -> Result<ParameterSet> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if manifest.format != "f64-le" {
        return Err(Error::Input(format!("unsupported checkpoint format {}", manifest.format)));
    }
    let mut set = ParameterSet::new();
    for entry in manifest.tensors {
        let blob = dir.join(&entry.file);
        let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Input(format!("{} is not a whole number of f64 values", blob.display())));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        set.add(entry.name, entry.role, entry.regularized, Tensor::new(entry.shape, data)?)?;
    }
    Ok(set)
}
