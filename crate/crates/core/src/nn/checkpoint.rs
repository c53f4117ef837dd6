//! Binary checkpoints: magic, little-endian header length, JSON header,
//! little-endian tensor count, then raw little-endian `f64` payload.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{Parameters, ParametersExt, TensorSpec};

pub const MAGIC: &[u8; 8] = b"SWHCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    /// Hex SHA-256 of the canonical architecture manifest.
    pub arch_hash: String,
    pub manifest: serde_json::Value,
    pub param_count: usize,
    pub tensors: Vec<TensorSpec>,
    /// Free-form run information (epoch, seed, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Hash of a manifest's compact JSON serialization.
pub fn arch_hash(manifest: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(manifest).expect("JSON values always serialize");
    hex_lower(&Sha256::digest(&bytes))
}

fn hex_lower(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save<P: Parameters + ?Sized>(
    path: impl AsRef<Path>,
    params: &P,
    manifest: &serde_json::Value,
    extra: serde_json::Value,
) -> Result<CheckpointHeader> {
    let header = CheckpointHeader {
        format: "swarmheal-checkpoint".into(),
        version: FORMAT_VERSION,
        arch_hash: arch_hash(manifest),
        manifest: manifest.clone(),
        param_count: params.param_count(),
        tensors: params.tensor_specs(),
        extra,
    };
    let json = serde_json::to_vec(&header)?;
    let flat = params.to_flat();
    let mut buf = Vec::with_capacity(32 + json.len() + flat.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in &flat {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let path = path.as_ref();
    // Write-then-rename so readers never see a half-written file.
    let tmp = path.with_extension("ckpt.tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(header)
}

fn incompatible(path: &Path, reason: impl Into<String>) -> Error {
    Error::Incompatible { path: PathBuf::from(path), reason: reason.into() }
}

/// Parses header and payload without touching any model.
pub fn read(path: impl AsRef<Path>) -> Result<(CheckpointHeader, Vec<f64>)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        let s = bytes.get(*off..*off + n).ok_or_else(|| incompatible(path, "truncated file"))?;
        *off += n;
        Ok(s)
    };
    let mut off = 0;
    if take(&mut off, 8)? != MAGIC {
        return Err(incompatible(path, "not a checkpoint (bad magic)"));
    }
    let hlen = u64::from_le_bytes(take(&mut off, 8)?.try_into().expect("8 bytes")) as usize;
    let header: CheckpointHeader =
        serde_json::from_slice(take(&mut off, hlen)?).map_err(|e| incompatible(path, format!("corrupt header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(incompatible(path, format!("format version {} (expected {FORMAT_VERSION})", header.version)));
    }
    if header.arch_hash != arch_hash(&header.manifest) {
        return Err(incompatible(path, "manifest does not match its hash"));
    }
    let count = u64::from_le_bytes(take(&mut off, 8)?.try_into().expect("8 bytes")) as usize;
    let listed: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if count != header.param_count || listed != count {
        return Err(incompatible(path, "parameter count disagrees with header"));
    }
    let payload = take(&mut off, count * 8)?;
    let flat = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if off != bytes.len() {
        return Err(incompatible(path, "trailing bytes after payload"));
    }
    Ok((header, flat))
}

/// Loads into `params`, which must have been built from `manifest`. Nothing
/// is written unless every check passes.
pub fn load_into<P: Parameters + ?Sized>(path: impl AsRef<Path>, params: &mut P, manifest: &serde_json::Value) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let (header, flat) = read(path)?;
    if header.arch_hash != arch_hash(manifest) {
        return Err(incompatible(path, "architecture hash mismatch"));
    }
    if header.tensors != params.tensor_specs() {
        return Err(incompatible(path, "tensor layout mismatch"));
    }
    params.copy_from_flat(&flat)?;
    Ok(header)
}
