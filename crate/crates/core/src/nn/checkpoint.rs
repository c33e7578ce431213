//! `GDCK` checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"GDCK" | u32 version (=1) | u64 metadata length | metadata JSON (UTF-8) | f32 payloads
//! ```
//!
//! The metadata is `{"config": <any>, "tensors": [{"name", "shape"}, ...]}` and the
//! payloads are the tensors' raw little-endian floats concatenated in manifest order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GDCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<(), NnError> {
    let meta = Metadata {
        config: ckpt.config.clone(),
        tensors: ckpt
            .tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::new();
    for (_, t) in &ckpt.tensors {
        buf.clear();
        buf.extend(t.data().iter().flat_map(|v| v.to_le_bytes()));
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, NnError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let len = u64::from_le_bytes(u64buf) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let meta: Metadata =
        serde_json::from_slice(&json).map_err(|e| NnError::Checkpoint(format!("metadata: {e}")))?;
    let mut tensors = Vec::with_capacity(meta.tensors.len());
    for entry in meta.tensors {
        let numel: usize = entry.shape.iter().product();
        let mut raw = vec![0u8; numel * 4];
        r.read_exact(&mut raw).map_err(|e| {
            NnError::Checkpoint(format!("payload of {} truncated: {e}", entry.name))
        })?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push((entry.name, Tensor::from_vec(&entry.shape, data)?));
    }
    Ok(Checkpoint {
        config: meta.config,
        tensors,
    })
}
