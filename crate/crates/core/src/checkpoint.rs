//! Self-verifying parameter container shared by every trained model.
//!
//! Layout: 8-byte magic, little-endian `u64` header length, JSON header,
//! then the tensors as little-endian `f64` blobs in header order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nn::{Module, Real};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"DGCVCKP1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    step: u64,
    config_hash: String,
    config: serde_json::Value,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
    payload_sha256: String,
}

/// Hash and snapshot of the configuration behind an artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigStamp {
    pub hash: String,
    pub config: serde_json::Value,
}

impl ConfigStamp {
    /// Stamps an arbitrary serializable configuration with the SHA-256 of its JSON form.
    pub fn of<T: Serialize>(config: &T) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let hash = hex::encode(Sha256::digest(serde_json::to_vec(&config)?));
        Ok(Self { hash, config })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Model family tag such as `asv` or `vc`.
    pub kind: String,
    pub step: u64,
    pub config_hash: String,
    /// Snapshot of the configuration that produced the parameters.
    pub config: serde_json::Value,
    /// Free-form extras (speaker lists, best loss, ...).
    pub meta: serde_json::Value,
    tensors: BTreeMap<String, Array2<f64>>,
    order: Vec<String>,
}

impl Checkpoint {
    pub fn new(kind: &str, step: u64, config_hash: &str, config: serde_json::Value) -> Self {
        Self {
            kind: kind.to_owned(),
            step,
            config_hash: config_hash.to_owned(),
            config,
            meta: serde_json::Value::Null,
            tensors: BTreeMap::new(),
            order: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) {
        if self.tensors.insert(name.to_owned(), value).is_none() {
            self.order.push(name.to_owned());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensors.get(name)
    }

    pub fn names(&self) -> &[String] {
        &self.order
    }

    /// Stores every parameter (including buffers) of `module` under `prefix`.
    pub fn insert_module<F: Real>(&mut self, prefix: &str, module: &dyn Module<F>) {
        module.visit(prefix, &mut |name, p| self.insert(name, p.value.mapv(|v| v.f64())));
    }

    /// Overwrites every parameter of `module` from the tensors under `prefix`.
    /// Missing names or shape differences are integrity errors.
    pub fn load_module<F: Real>(&self, prefix: &str, module: &mut dyn Module<F>) -> Result<()> {
        let mut err = None;
        module.visit_mut(prefix, &mut |name, p| {
            if err.is_some() {
                return;
            }
            match self.tensors.get(name) {
                None => err = Some(Error::Integrity(format!("checkpoint has no tensor {name}"))),
                Some(t) if t.dim() != p.value.dim() => {
                    err = Some(Error::Integrity(format!(
                        "tensor {name} has shape {:?}, model expects {:?}",
                        t.dim(),
                        p.value.dim()
                    )))
                }
                Some(t) => p.value = t.mapv(F::of),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let mut entries = Vec::with_capacity(self.order.len());
        for name in &self.order {
            let t = &self.tensors[name];
            for v in t.iter() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            entries.push(TensorEntry {
                name: name.clone(),
                rows: t.nrows(),
                cols: t.ncols(),
            });
        }
        let header = Header {
            kind: self.kind.clone(),
            step: self.step,
            config_hash: self.config_hash.clone(),
            config: self.config.clone(),
            meta: self.meta.clone(),
            tensors: entries,
            payload_sha256: hex::encode(Sha256::digest(&payload)),
        };
        let head = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + head.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(head.len() as u64).to_le_bytes());
        out.extend(head);
        out.extend(payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Integrity(msg.to_owned());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let head_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let head_end = 16usize.checked_add(head_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..head_end]).map_err(|e| bad(&format!("corrupt header: {e}")))?;
        let payload = &bytes[head_end..];
        if hex::encode(Sha256::digest(payload)) != header.payload_sha256 {
            return Err(bad("payload hash mismatch"));
        }
        let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols * 8).sum();
        if expected != payload.len() {
            return Err(bad("payload size does not match tensor index"));
        }
        let mut ck = Checkpoint::new(&header.kind, header.step, &header.config_hash, header.config);
        ck.meta = header.meta;
        let mut offset = 0;
        for t in header.tensors {
            let n = t.rows * t.cols;
            let data: Vec<f64> = payload[offset..offset + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            offset += 8 * n;
            let arr = Array2::from_shape_vec((t.rows, t.cols), data).map_err(|e| bad(&e.to_string()))?;
            ck.insert(&t.name, arr);
        }
        Ok(ck)
    }

    /// Writes atomically through a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingModel(format!("checkpoint {} does not exist", path.display()))
            } else {
                Error::io(path, e)
            }
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Integrity(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// SHA-256 over every parameter name, shape and value of `module`.
pub fn module_checksum<F: Real>(module: &dyn Module<F>) -> String {
    let mut h = Sha256::new();
    module.visit("", &mut |name, p| {
        h.update(name.as_bytes());
        h.update((p.value.nrows() as u64).to_le_bytes());
        h.update((p.value.ncols() as u64).to_le_bytes());
        for v in p.value.iter() {
            h.update(v.f64().to_le_bytes());
        }
    });
    hex::encode(h.finalize())
}
