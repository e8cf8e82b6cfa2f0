//! Single-file binary container shared by checkpoints and datasets.
//!
//! Layout: 8-byte magic, u32 LE header length, JSON header, little-endian
//! f64 blob, u32 LE CRC-32 of every preceding byte. Writes go to a temporary
//! file in the target directory and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 8] = b"RSURR\x00\x01\n";

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("not a reach-surrogate container (bad magic)")]
    Magic,
    #[error("file truncated: {0}")]
    Truncated(&'static str),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("expected a {expected} file, found {found}")]
    Kind { expected: String, found: String },
    #[error("unsupported format version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },
    #[error("tensor `{0}` missing or out of range")]
    Tensor(String),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

impl TensorEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub version: u32,
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

/// Decoded container: header plus the raw blob values.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: Header,
    blob: Vec<f64>,
}

impl Container {
    pub fn new(kind: &str, version: u32, meta: serde_json::Value) -> Self {
        Self {
            header: Header {
                kind: kind.into(),
                version,
                meta,
                tensors: Vec::new(),
            },
            blob: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.header.tensors.push(TensorEntry {
            name: name.into(),
            shape: shape.to_vec(),
            offset: self.blob.len() * 8,
        });
        self.blob.extend_from_slice(data);
    }

    pub fn get(&self, name: &str) -> Result<(&[usize], &[f64]), ContainerError> {
        let e = self
            .header
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| ContainerError::Tensor(name.into()))?;
        let start = e.offset / 8;
        let data = self
            .blob
            .get(start..start + e.len())
            .ok_or_else(|| ContainerError::Tensor(name.into()))?;
        Ok((&e.shape, data))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ContainerError> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(16 + header.len() + self.blob.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Verifies magic and checksum before interpreting anything else.
    pub fn from_bytes(bytes: &[u8], kind: &str, supported: u32) -> Result<Self, ContainerError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(ContainerError::Magic);
        }
        if bytes.len() < MAGIC.len() + 8 {
            return Err(ContainerError::Truncated("no room for header length and checksum"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(ContainerError::Checksum { stored, computed });
        }
        let hlen = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
        let rest = &body[12..];
        if rest.len() < hlen {
            return Err(ContainerError::Truncated("header"));
        }
        let header: Header = serde_json::from_slice(&rest[..hlen])?;
        if header.kind != kind {
            return Err(ContainerError::Kind {
                expected: kind.into(),
                found: header.kind,
            });
        }
        if header.version != supported {
            return Err(ContainerError::Version {
                found: header.version,
                supported,
            });
        }
        let raw = &rest[hlen..];
        if raw.len() % 8 != 0 {
            return Err(ContainerError::Truncated("blob is not a whole number of f64 values"));
        }
        let blob: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let c = Self { header, blob };
        for e in &c.header.tensors {
            c.get(&e.name)?;
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<(), ContainerError> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path, kind: &str, supported: u32) -> Result<Self, ContainerError> {
        Self::from_bytes(&fs::read(path)?, kind, supported)
    }
}

/// Writes `bytes` to a sibling temporary file, syncs it and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ContainerError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new().prefix(".rsurr-").suffix(".tmp").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
