//! Checkpoint files.
//!
//! Layout: manifest length as u64 LE, the JSON manifest, then one blob of
//! little-endian f64 values. The manifest lists every tensor with its shape
//! and byte offset into the blob, in the order written.

use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::EmbeddingTables;
use crate::error::{Error, Result};
use crate::model::{Model, Topology};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub schema_digest: String,
    pub dims: Vec<usize>,
    pub topology: Topology,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub schema_digest: String,
    pub model: Model,
}

fn split_file(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
    if bytes.len() < 8 {
        return Err(Error::Format("checkpoint too short".into()));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() < len {
        return Err(Error::Format("truncated checkpoint manifest".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&body[..len])?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint format_version {}",
            manifest.format_version
        )));
    }
    Ok((manifest, &body[len..]))
}

fn read_tensor(blob: &[u8], entry: &TensorEntry) -> Result<ArrayD<f64>> {
    let n: usize = entry.shape.iter().product();
    let start = entry.offset as usize;
    let end = start + 8 * n;
    if end > blob.len() {
        return Err(Error::Format(format!("tensor `{}` runs past the blob", entry.name)));
    }
    let data: Vec<f64> = blob[start..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ArrayD::from_shape_vec(IxDyn(&entry.shape), data).map_err(|e| Error::Format(e.to_string()))
}

/// Hex SHA-256 of raw checkpoint bytes.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Checkpoint {
    pub fn new(schema_digest: impl Into<String>, model: Model) -> Self {
        Checkpoint {
            schema_digest: schema_digest.into(),
            model,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let named = self.model.named_tensors();
        let mut tensors = Vec::with_capacity(named.len());
        let mut blob = Vec::new();
        for (name, t) in &named {
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset: blob.len() as u64,
            });
            for v in t.iter() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            schema_digest: self.schema_digest.clone(),
            dims: self.model.topology.dims.clone(),
            topology: self.model.topology.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(8 + json.len() + blob.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (manifest, blob) = split_file(bytes)?;
        let mut model = Model::init(manifest.topology.clone(), 0)?;
        let mut targets = model.named_tensors_mut();
        if targets.len() != manifest.tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, topology needs {}",
                manifest.tensors.len(),
                targets.len()
            )));
        }
        for ((name, target), entry) in targets.iter_mut().zip(&manifest.tensors) {
            if *name != entry.name || target.shape() != entry.shape.as_slice() {
                return Err(Error::Format(format!(
                    "tensor `{}` {:?} does not match expected `{name}` {:?}",
                    entry.name,
                    entry.shape,
                    target.shape()
                )));
            }
            target.assign(&read_tensor(blob, entry)?);
        }
        drop(targets);
        model.validate()?;
        Ok(Checkpoint {
            schema_digest: manifest.schema_digest,
            model,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Reads only the `emb.{f}` tables, without rebuilding a model.
pub fn embeddings_from_bytes(bytes: &[u8]) -> Result<EmbeddingTables> {
    let (manifest, blob) = split_file(bytes)?;
    let mut tables: Vec<(usize, Array2<f64>)> = Vec::new();
    for entry in &manifest.tensors {
        if let Some(f) = entry.name.strip_prefix("emb.") {
            let f: usize = f
                .parse()
                .map_err(|_| Error::Format(format!("bad embedding tensor name `{}`", entry.name)))?;
            let t = read_tensor(blob, entry)?
                .into_dimensionality()
                .map_err(|_| Error::Format(format!("`{}` is not a matrix", entry.name)))?;
            tables.push((f, t));
        }
    }
    if tables.is_empty() {
        return Err(Error::Format("checkpoint carries no embedding tensors".into()));
    }
    tables.sort_by_key(|(f, _)| *f);
    if tables.iter().enumerate().any(|(i, (f, _))| i != *f) {
        return Err(Error::Format("embedding tensors are not numbered 0..F".into()));
    }
    Ok(EmbeddingTables {
        tables: tables.into_iter().map(|(_, t)| t).collect(),
    })
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<(EmbeddingTables, String)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((embeddings_from_bytes(&bytes)?, digest_bytes(&bytes)))
}
