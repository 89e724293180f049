//! Binary embedding bundles.
//!
//! Layout (all integers little-endian, no padding):
//!
//! ```text
//! magic   b"RSEB"
//! u32     version (= 1)
//! u32     dim
//! u64     count
//! count × { u16 key_len, key_len bytes UTF-8 key, dim × f32 }
//! ```
//!
//! The writer is canonical: reading a valid bundle and writing it back
//! reproduces the input byte for byte, since entry order is preserved and
//! vectors are kept as `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

pub const BUNDLE_MAGIC: &[u8; 4] = b"RSEB";
pub const BUNDLE_VERSION: u32 = 1;

/// Allowed deviation of a declared unit-norm vector from norm 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-3;

/// Keyed store of fixed-dimension vectors for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub channel_name: String,
    pub dim: usize,
    entries: IndexMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(channel_name: impl Into<String>, dim: usize) -> Result<Self> {
        let channel_name = channel_name.into();
        if dim == 0 {
            return Err(Error::malformed(channel_name, "dimension must be positive"));
        }
        Ok(Self {
            channel_name,
            dim,
            entries: IndexMap::new(),
        })
    }

    /// Adds a vector, rejecting wrong lengths, non-finite components and
    /// duplicate keys.
    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let key = key.into();
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                context: format!("{}[{key}]", self.channel_name),
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("{}[{key}]", self.channel_name),
            });
        }
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateKey {
                context: self.channel_name.clone(),
                key,
            });
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    /// Convenience for callers holding `f64` data; components are narrowed
    /// to `f32` as stored on disk.
    pub fn insert_f64(&mut self, key: impl Into<String>, vector: &[f64]) -> Result<()> {
        self.insert(key, vector.iter().map(|&v| v as f32).collect())
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    /// Widened copy of a stored vector; all arithmetic downstream is `f64`.
    pub fn get_f64(&self, key: &str) -> Option<Vec<f64>> {
        self.get(key).map(|v| v.iter().map(|&c| c as f64).collect())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Fails on the first vector whose Euclidean norm is off by more than
    /// [`UNIT_NORM_TOLERANCE`].
    pub fn check_unit_norm(&self) -> Result<()> {
        for (key, v) in self.iter() {
            let norm = v.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::NotUnitNorm {
                    context: self.channel_name.clone(),
                    key: key.to_string(),
                    norm,
                });
            }
        }
        Ok(())
    }
}

pub fn read_bundle(path: &Path, channel_name: &str) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_bundle_from(BufReader::new(file), channel_name, &path.display().to_string())
}

pub fn write_bundle(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_bundle_to(&mut writer, table).map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn write_bundle_to<W: Write>(mut w: W, table: &EmbeddingTable) -> std::io::Result<()> {
    w.write_all(BUNDLE_MAGIC)?;
    w.write_all(&BUNDLE_VERSION.to_le_bytes())?;
    w.write_all(&(table.dim as u32).to_le_bytes())?;
    w.write_all(&(table.len() as u64).to_le_bytes())?;
    for (key, v) in table.iter() {
        let len = u16::try_from(key.len()).map_err(|_| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("key `{key}` exceeds 65535 bytes"),
            )
        })?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(key.as_bytes())?;
        for c in v {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_bundle_from<R: Read>(mut r: R, channel_name: &str, context: &str) -> Result<EmbeddingTable> {
    let io = |e: std::io::Error| Error::malformed(context, format!("truncated bundle: {e}"));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != BUNDLE_MAGIC {
        return Err(Error::malformed(context, "bad magic (expected RSEB)"));
    }
    let version = read_u32(&mut r).map_err(io)?;
    if version != BUNDLE_VERSION {
        return Err(Error::malformed(context, format!("unsupported version {version}")));
    }
    let dim = read_u32(&mut r).map_err(io)? as usize;
    let count = read_u64(&mut r).map_err(io)?;

    let mut table = EmbeddingTable::new(channel_name, dim).map_err(|_| Error::malformed(context, "dim 0"))?;
    let mut buf = vec![0u8; dim * 4];
    for _ in 0..count {
        let mut len = [0u8; 2];
        r.read_exact(&mut len).map_err(io)?;
        let mut key = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut key).map_err(io)?;
        let key = String::from_utf8(key).map_err(|_| Error::malformed(context, "key is not UTF-8"))?;
        r.read_exact(&mut buf).map_err(io)?;
        let vector = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        table.insert(key, vector).map_err(|e| match e {
            Error::DuplicateKey { key, .. } => Error::DuplicateKey {
                context: context.to_string(),
                key,
            },
            Error::NonFinite { context: inner } => Error::NonFinite {
                context: format!("{context}: {inner}"),
            },
            other => other,
        })?;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io)? != 0 {
        return Err(Error::malformed(context, "trailing bytes after last entry"));
    }
    Ok(table)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
