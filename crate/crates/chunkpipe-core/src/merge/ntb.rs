//! NTB: the named-tensor bundle container.
//!
//! Layout: 8-byte magic `NTBNDL01`, u32 LE manifest length, UTF-8 JSON
//! manifest, raw little-endian f32 payload, trailing CRC32 (u32 LE) of the
//! payload. Tensor offsets in the manifest are relative to the payload
//! start. Save/load round-trips are byte-exact, including f32 bit patterns.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MergeError, Tensor, TensorBundle};

const MAGIC: &[u8; 8] = b"NTBNDL01";

#[derive(Serialize, Deserialize)]
struct ManifestTensor {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
    nbytes: usize,
}

#[derive(Serialize, Deserialize)]
struct ManifestMetadata {
    label: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<ManifestTensor>,
    metadata: ManifestMetadata,
}

/// Write a bundle. Tensors are packed in map order at sequential offsets.
pub fn save_bundle(bundle: &TensorBundle, path: &Path) -> Result<(), MergeError> {
    let mut tensors = Vec::with_capacity(bundle.tensors().len());
    let mut payload = Vec::new();
    for (name, tensor) in bundle.tensors() {
        let offset = payload.len();
        for value in &tensor.data {
            payload.extend_from_slice(&value.to_le_bytes());
        }
        tensors.push(ManifestTensor {
            name: name.clone(),
            shape: tensor.shape.clone(),
            dtype: "f32".into(),
            offset,
            nbytes: tensor.data.len() * 4,
        });
    }
    let manifest = Manifest { tensors, metadata: ManifestMetadata { label: bundle.label.clone() } };
    let manifest_bytes =
        serde_json::to_vec(&manifest).map_err(|e| MergeError::CorruptBundle(e.to_string()))?;

    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MAGIC)?;
    file.write_all(&(manifest_bytes.len() as u32).to_le_bytes())?;
    file.write_all(&manifest_bytes)?;
    file.write_all(&payload)?;
    file.write_all(&crc32fast::hash(&payload).to_le_bytes())?;
    file.flush()?;
    Ok(())
}

/// Read a bundle back, validating magic, manifest bounds, dtype, shapes and
/// the payload checksum.
pub fn load_bundle(path: &Path) -> Result<TensorBundle, MergeError> {
    let bytes = std::fs::read(path)?;
    let corrupt = |msg: String| MergeError::CorruptBundle(msg);

    if bytes.len() < MAGIC.len() + 4 + 4 {
        return Err(corrupt(format!("file too short: {} bytes", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let manifest_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload_start = 12 + manifest_len;
    if payload_start + 4 > bytes.len() {
        return Err(corrupt(format!(
            "manifest length {manifest_len} exceeds file size {}",
            bytes.len()
        )));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[12..payload_start])
        .map_err(|e| corrupt(format!("bad manifest: {e}")))?;

    let payload = &bytes[payload_start..bytes.len() - 4];
    let stored_crc =
        u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let actual_crc = crc32fast::hash(payload);
    if stored_crc != actual_crc {
        return Err(corrupt(format!("payload crc {actual_crc:08x} != stored {stored_crc:08x}")));
    }

    let mut parts = Vec::with_capacity(manifest.tensors.len());
    for entry in manifest.tensors {
        if entry.dtype != "f32" {
            return Err(corrupt(format!("tensor {:?} has dtype {:?}", entry.name, entry.dtype)));
        }
        let expected: usize = entry.shape.iter().product();
        if entry.nbytes != expected * 4 {
            return Err(corrupt(format!(
                "tensor {:?}: shape {:?} needs {} bytes, manifest says {}",
                entry.name,
                entry.shape,
                expected * 4,
                entry.nbytes
            )));
        }
        let end = entry.offset.checked_add(entry.nbytes).filter(|&e| e <= payload.len());
        let Some(end) = end else {
            return Err(corrupt(format!(
                "tensor {:?}: span {}..{} outside payload of {} bytes",
                entry.name,
                entry.offset,
                entry.offset + entry.nbytes,
                payload.len()
            )));
        };
        let data: Vec<f32> = payload[entry.offset..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        parts.push((entry.name, Tensor { shape: entry.shape, data }));
    }
    TensorBundle::from_parts(manifest.metadata.label, parts)
}
