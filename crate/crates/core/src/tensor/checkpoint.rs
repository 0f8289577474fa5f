//! Single-file parameter checkpoints.
//!
//! Layout: an 8-byte little-endian header length, a JSON header listing
//! parameter names and shapes plus an arbitrary config object, then every
//! parameter's data as little-endian `f64` in header order.

use super::dense::Tensor;
use super::param::ParamStore;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed checkpoint: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    params: Vec<Entry>,
    config: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

pub fn save_checkpoint(path: impl AsRef<Path>, store: &ParamStore, config: &serde_json::Value) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let header = Header {
        params: store.ids().map(|id| Entry { name: store.name(id).to_string(), shape: store.value(id).shape.clone() }).collect(),
        config: config.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut bytes = Vec::with_capacity(8 + json.len() + store.scalar_count() * 8);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for id in store.ids() {
        for v in &store.value(id).data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ParamStore, serde_json::Value), CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    let bad = |message: String| CheckpointError::Format { path: path.to_path_buf(), message };
    if bytes.len() < 8 {
        return Err(bad("missing header length".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let body = bytes.get(8..8 + header_len).ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
    let mut offset = 8 + header_len;
    let mut store = ParamStore::new();
    for entry in header.params {
        let count: usize = entry.shape.iter().product();
        let raw = bytes.get(offset..offset + count * 8).ok_or_else(|| bad(format!("truncated data for {}", entry.name)))?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        store.add(entry.name, Tensor::new(entry.shape, data).expect("count matches shape"));
        offset += count * 8;
    }
    if offset != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - offset)));
    }
    Ok((store, header.config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = ParamStore::new();
        store.add("a", Tensor::matrix(2, 2, vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap());
        store.add("b", Tensor::scalar(std::f64::consts::PI));
        let config = serde_json::json!({"dim": 8});
        save_checkpoint(&path, &store, &config).unwrap();
        let (loaded, cfg) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg, config);
        for id in store.ids() {
            assert_eq!(loaded.name(id), store.name(id));
            let bits = |t: &Tensor| t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(loaded.value(id)), bits(store.value(id)));
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = ParamStore::new();
        store.add("a", Tensor::zeros(&[4]));
        save_checkpoint(&path, &store, &serde_json::Value::Null).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Format { .. })));
    }
}
