//! Manifest + blob persistence for named tensors.
//!
//! A manifest is a JSON file listing each tensor's name, shape and byte
//! offset into a flat little-endian f64 blob stored next to it. The same
//! convention carries model checkpoints and datasets; round-trips are
//! bit-exact.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

pub const MANIFEST_FORMAT: &str = "dssl-tensors-v1";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Byte offset of the first value inside the blob.
    pub offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub format: String,
    /// Blob filename relative to the manifest's directory.
    pub blob: String,
    pub blob_sha256: String,
    pub entries: Vec<TensorEntry>,
    /// Caller-owned metadata (configs, variant tags, label layouts).
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Writes `tensors` to `<dir>/<stem>.json` + `<dir>/<stem>.bin`.
pub fn save_tensors(
    dir: &Path,
    stem: &str,
    tensors: &[(&str, &Tensor)],
    meta: serde_json::Value,
) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut blob: Vec<u8> = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        let offset = blob.len() as u64;
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(TensorEntry {
            name: (*name).to_string(),
            rows: t.rows(),
            cols: t.cols(),
            offset,
        });
    }
    let digest = Sha256::digest(&blob);
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        blob: format!("{stem}.bin"),
        blob_sha256: hex_string(&digest),
        entries,
        meta,
    };
    fs::write(dir.join(format!("{stem}.bin")), &blob)?;
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization failed: {e}")))?;
    fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(manifest)
}

/// Loads a manifest and all tensors it names, verifying the blob hash.
pub fn load_tensors(manifest_path: &Path) -> Result<(Manifest, Vec<(String, Tensor)>)> {
    if !manifest_path.exists() {
        return Err(Error::MissingInput(format!("manifest not found: {}", manifest_path.display())));
    }
    let text = fs::read_to_string(manifest_path)?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad manifest: {e}")))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::Format(format!("unsupported manifest format '{}'", manifest.format)));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let blob_path = dir.join(&manifest.blob);
    if !blob_path.exists() {
        return Err(Error::MissingInput(format!("blob not found: {}", blob_path.display())));
    }
    let blob = fs::read(&blob_path)?;
    let digest = hex_string(&Sha256::digest(&blob));
    if digest != manifest.blob_sha256 {
        return Err(Error::Format(format!(
            "blob hash mismatch for {}: manifest says {}, file is {}",
            blob_path.display(),
            manifest.blob_sha256,
            digest
        )));
    }
    let mut out = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let n = e.rows * e.cols;
        let start = e.offset as usize;
        let end = start + n * 8;
        if end > blob.len() {
            return Err(Error::Format(format!("entry '{}' overruns blob", e.name)));
        }
        let data: Vec<f64> = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((e.name.clone(), Tensor::from_vec(e.rows, e.cols, data)?));
    }
    Ok((manifest, out))
}

/// SHA-256 of a manifest file's bytes; the content identity used by run
/// reports to pin which dataset or checkpoint a run consumed.
pub fn manifest_hash(manifest_path: &Path) -> Result<String> {
    let bytes = fs::read(manifest_path)?;
    Ok(hex_string(&Sha256::digest(&bytes)))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
