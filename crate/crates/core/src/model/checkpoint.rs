//! Versioned binary checkpoints.
//!
//! Layout: the 8-byte magic `DATTCKPT`, a little-endian `u32` version, a
//! little-endian `u64` header length, a JSON header, then every parameter as
//! little-endian `f64` in visiting order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::Params;
use super::transformer::{ModelConfig, TransformerModel};
use crate::{Error, Result, Scalar};

const MAGIC: &[u8; 8] = b"DATTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub vocab_size: usize,
    /// Content hash of the vocabulary the model was trained with.
    pub vocab_hash: String,
    pub tensors: Vec<TensorInfo>,
    /// Free-form metadata such as the epoch.
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn to_bytes<T: Scalar>(model: &TransformerModel<T>, vocab_hash: &str, meta: serde_json::Value) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut values = Vec::new();
    model.visit("", &mut |name, p| {
        tensors.push(TensorInfo {
            name: name.to_string(),
            len: p.len(),
        });
        values.extend(p.iter().map(|x| x.as_f64()));
    });
    let header = CheckpointHeader {
        config: model.config.clone(),
        vocab_size: model.vocab_size(),
        vocab_hash: vocab_hash.to_string(),
        tensors,
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<(TransformerModel<T>, CheckpointHeader)> {
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Checkpoint("truncated magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| Error::Checkpoint("truncated version".into()))?;
    let version = u32::from_le_bytes(u32buf);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(|_| Error::Checkpoint("truncated header length".into()))?;
    let len = u64::from_le_bytes(u64buf) as usize;
    if r.len() < len {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&r[..len])?;
    r = &r[len..];
    let mut model = TransformerModel::<T>::new(header.config.clone(), header.vocab_size)?;
    let mut layout = Vec::new();
    model.visit("", &mut |name, p| layout.push((name.to_string(), p.len())));
    let expected: Vec<(String, usize)> = header.tensors.iter().map(|t| (t.name.clone(), t.len)).collect();
    if layout != expected {
        return Err(Error::Checkpoint("tensor layout does not match the configuration".into()));
    }
    let total: usize = layout.iter().map(|(_, n)| n).sum();
    if r.len() != 8 * total {
        return Err(Error::Checkpoint(format!("expected {} parameter bytes, found {}", 8 * total, r.len())));
    }
    let mut chunks = r.chunks_exact(8);
    model.visit_mut("", &mut |_, p| {
        for x in p.iter_mut() {
            let b: [u8; 8] = chunks.next().expect("length checked").try_into().expect("8 bytes");
            *x = T::of(f64::from_le_bytes(b));
        }
    });
    Ok((model, header))
}

pub fn save<T: Scalar>(path: &Path, model: &TransformerModel<T>, vocab_hash: &str, meta: serde_json::Value) -> Result<()> {
    let bytes = to_bytes(model, vocab_hash, meta)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<(TransformerModel<T>, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
