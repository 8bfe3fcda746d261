//! ATB1 tensor container.
//!
//! Layout: an 8-byte little-endian manifest length, the JSON manifest, zero
//! padding up to a 64-byte boundary, then the raw blob. The manifest is
//! `{version, entries:[{name, shape, dtype:"f32", byte_offset, byte_len}]}`
//! with an optional `meta` object for callers that need scalar metadata.
//! Entry offsets are relative to the blob start and 64-byte aligned; values
//! are little-endian f32.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

const ALIGN: u64 = 64;

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    byte_offset: u64,
    byte_len: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
    entries: Vec<Entry>,
}

fn align_up(v: u64) -> u64 {
    v.div_ceil(ALIGN) * ALIGN
}

/// Serialize tensors (and optional metadata) into ATB1 bytes.
pub fn to_bytes(meta: Option<serde_json::Value>, tensors: &[(&str, &Tensor)]) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in tensors {
        offset = align_up(offset);
        let byte_len = (t.len() * 4) as u64;
        entries.push(Entry {
            name: (*name).to_string(),
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            byte_offset: offset,
            byte_len,
        });
        offset += byte_len;
    }
    let manifest = Manifest {
        version: "ATB1".into(),
        meta,
        entries,
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    let blob_start = align_up(8 + manifest_bytes.len() as u64);

    let mut out = Vec::with_capacity((blob_start + offset) as usize);
    out.extend_from_slice(&(manifest_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_bytes);
    out.resize(blob_start as usize, 0);
    for (entry, (_, t)) in manifest.entries.iter().zip(tensors) {
        out.resize((blob_start + entry.byte_offset) as usize, 0);
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parse ATB1 bytes into (meta, named tensors).
pub fn from_bytes(bytes: &[u8]) -> Result<(Option<serde_json::Value>, Vec<(String, Tensor)>)> {
    if bytes.len() < 8 {
        return Err(Error::Format {
            offset: 0,
            message: format!("file too short for header: {} bytes", bytes.len()),
        });
    }
    let manifest_len = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    let manifest_end = 8 + manifest_len;
    if (bytes.len() as u64) < manifest_end {
        return Err(Error::Format {
            offset: 8,
            message: format!(
                "manifest length {manifest_len} exceeds file size {}",
                bytes.len()
            ),
        });
    }
    let manifest: Manifest =
        serde_json::from_slice(&bytes[8..manifest_end as usize]).map_err(|e| Error::Format {
            offset: 8,
            message: format!("manifest parse failed: {e}"),
        })?;
    if manifest.version != "ATB1" && manifest.version != "AVR1" {
        return Err(Error::Format {
            offset: 8,
            message: format!("unknown version {:?}", manifest.version),
        });
    }
    let blob_start = align_up(manifest_end);
    let mut tensors = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        if e.dtype != "f32" {
            return Err(Error::Format {
                offset: blob_start + e.byte_offset,
                message: format!("entry {}: unsupported dtype {}", e.name, e.dtype),
            });
        }
        let count: usize = e.shape.iter().product();
        if count as u64 * 4 != e.byte_len {
            return Err(Error::Format {
                offset: blob_start + e.byte_offset,
                message: format!(
                    "entry {}: shape {:?} disagrees with byte_len {}",
                    e.name, e.shape, e.byte_len
                ),
            });
        }
        let start = blob_start + e.byte_offset;
        let end = start + e.byte_len;
        if end > bytes.len() as u64 {
            return Err(Error::Format {
                offset: start,
                message: format!("entry {} runs past end of file", e.name),
            });
        }
        let raw = &bytes[start as usize..end as usize];
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((e.name.clone(), Tensor::from_vec(&e.shape, data)?));
    }
    Ok((manifest.meta, tensors))
}

pub fn write(path: &Path, meta: Option<serde_json::Value>, tensors: &[(&str, &Tensor)]) -> Result<()> {
    let bytes = to_bytes(meta, tensors)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(Option<serde_json::Value>, Vec<(String, Tensor)>)> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, -2.5, 3.25, 0.0, f32::MIN_POSITIVE, 1e30]).unwrap();
        let b = Tensor::from_vec(&[4], vec![9.0, 8.0, 7.0, 6.5]).unwrap();
        let meta = serde_json::json!({"kind": "test", "t": 3});
        let bytes = to_bytes(Some(meta.clone()), &[("a", &a), ("b", &b)]).unwrap();
        let (m, tensors) = from_bytes(&bytes).unwrap();
        assert_eq!(m.unwrap(), meta);
        assert_eq!(tensors.len(), 2);
        assert_eq!(tensors[0].0, "a");
        assert_eq!(tensors[0].1, a);
        assert_eq!(tensors[1].1, b);
    }

    #[test]
    fn offsets_are_aligned() {
        let a = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![4.0]).unwrap();
        let bytes = to_bytes(None, &[("a", &a), ("b", &b)]).unwrap();
        let len = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
        let manifest: serde_json::Value = serde_json::from_slice(&bytes[8..8 + len]).unwrap();
        for e in manifest["entries"].as_array().unwrap() {
            assert_eq!(e["byte_offset"].as_u64().unwrap() % 64, 0);
        }
    }

    #[test]
    fn truncated_file_reports_offset() {
        let err = from_bytes(&[1, 2, 3]).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn bad_manifest_reports_offset_8() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&5u64.to_le_bytes());
        bytes.extend_from_slice(b"nope!");
        let err = from_bytes(&bytes).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 8),
            other => panic!("unexpected: {other}"),
        }
    }
}
