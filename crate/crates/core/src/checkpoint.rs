//! Binary checkpoints.
//!
//! Layout: the 8-byte magic `C2FCKPT\0`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the JSON header, then the
//! payload of little-endian `f64` values in manifest order. The header
//! carries the model config, each tensor's name, shape, byte offset into the
//! payload and element count, and the hex SHA-256 of the payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::params::{ManifestEntry, ParameterSet};

pub const MAGIC: &[u8; 8] = b"C2FCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorRecord>,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParameterSet,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ParameterSet) -> Self {
        Self { config, params }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::with_capacity(self.params.numel() * 8);
        let mut tensors = Vec::with_capacity(self.params.len());
        for (name, t) in self.params.iter() {
            tensors.push(TensorRecord {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset: payload.len() as u64,
                count: t.numel() as u64,
            });
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            tensors,
            sha256: hex::encode(Sha256::digest(&payload)),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if hlen > body.len() {
            return Err(bad("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| bad(format!("unreadable header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(format!("header version {}", header.format_version)));
        }
        let payload = &body[hlen..];
        if hex::encode(Sha256::digest(payload)) != header.sha256 {
            return Err(bad("payload checksum mismatch".into()));
        }
        let mut expected = 0u64;
        for r in &header.tensors {
            let numel: usize = r.shape.iter().product();
            if r.offset != expected || r.count != numel as u64 {
                return Err(bad(format!(
                    "tensor `{}` has inconsistent offset or count",
                    r.name
                )));
            }
            expected += r.count * 8;
        }
        if expected != payload.len() as u64 {
            return Err(bad(format!(
                "payload is {} bytes, manifest needs {expected}",
                payload.len()
            )));
        }
        let flat: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let manifest: Vec<ManifestEntry> = header
            .tensors
            .iter()
            .map(|r| ManifestEntry {
                name: r.name.clone(),
                shape: r.shape.clone(),
            })
            .collect();
        let params = ParameterSet::unflatten(&manifest, &flat)?;
        header.config.validate()?;
        Ok(Self {
            config: header.config,
            params,
        })
    }
}

pub fn save_checkpoint(params: &ParameterSet, config: &ModelConfig, path: &Path) -> Result<()> {
    let bytes = Checkpoint::new(config.clone(), params.clone()).to_bytes();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Loads and insists the stored config equals `expected`.
pub fn load_checkpoint_with(path: &Path, expected: &ModelConfig) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if &ck.config != expected {
        return Err(Error::Checkpoint(format!(
            "{} was saved with a different model config: {}",
            path.display(),
            config_diff(&ck.config, expected).join(", ")
        )));
    }
    Ok(ck)
}

/// Names of the top-level config fields that differ.
pub fn config_diff(a: &ModelConfig, b: &ModelConfig) -> Vec<String> {
    let (va, vb) = (
        serde_json::to_value(a).expect("config serializes"),
        serde_json::to_value(b).expect("config serializes"),
    );
    let (Some(ma), Some(mb)) = (va.as_object(), vb.as_object()) else {
        return Vec::new();
    };
    ma.iter()
        .filter(|(k, v)| mb.get(*k) != Some(*v))
        .map(|(k, v)| format!("{k} ({v} vs {})", mb.get(k).cloned().unwrap_or_default()))
        .collect()
}
