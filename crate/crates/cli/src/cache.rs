//! On-disk cache of feature vectors and local descriptor sets.
//!
//! Layout under the cache root:
//!
//! ```text
//! <feature>/<param_hash>/manifest.json
//! <feature>/<param_hash>/model.json          fitted vocabulary, topics, PCA or codebook
//! <feature>/<param_hash>/vectors/<id>.bin
//! <feature>/<param_hash>/failures.json
//! _descriptors/<param_hash>/<id>.bin         local descriptors shared by bow and vlad
//! ```
//!
//! Vector files start with `MMFV` and a format byte; descriptor files with `MMFD`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mmevent_core::visual::{DescriptorLocation, LocalDescriptorSet, DESCRIPTOR_DIM};
use mmevent_core::{FeatureVector, SparseVector};
use serde::{Deserialize, Serialize};

use crate::error::data_error;

pub const CACHE_ENV: &str = "MMEVENT_CACHE";
const VECTOR_MAGIC: &[u8; 4] = b"MMFV";
const DESCRIPTOR_MAGIC: &[u8; 4] = b"MMFD";
const FORMAT_VERSION: u8 = 1;

/// Cache root: `$MMEVENT_CACHE` if set, else `<output>/cache`.
pub fn cache_root(output: &Path) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => output.join("cache"),
    }
}

/// Short hex hash of any serializable parameter set.
pub fn param_hash<T: Serialize>(params: &T) -> String {
    let json = serde_json::to_string(params).expect("parameters serialize");
    mmevent_core::fusion::sha256_hex(json.as_bytes())[..16].to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub feature: String,
    pub param_hash: String,
    pub params: serde_json::Value,
    pub corpus_hash: String,
    pub dim: usize,
    pub records: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Failures {
    /// Record id to reason.
    pub records: BTreeMap<String, String>,
}

/// File names must stay inside their directory; rewritten ids get a hash
/// suffix so two ids never share a file.
fn file_stem(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if safe == id && !safe.is_empty() {
        safe
    } else {
        format!(
            "{safe}-{}",
            &mmevent_core::fusion::sha256_hex(id.as_bytes())[..8]
        )
    }
}

#[derive(Debug, Clone)]
pub struct FeatureDir {
    pub root: PathBuf,
}

impl FeatureDir {
    pub fn new(cache_root: &Path, feature: &str, hash: &str) -> Self {
        Self {
            root: cache_root.join(feature).join(hash),
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn model_path(&self) -> PathBuf {
        self.root.join("model.json")
    }

    pub fn failures_path(&self) -> PathBuf {
        self.root.join("failures.json")
    }

    pub fn vector_path(&self, id: &str) -> PathBuf {
        self.root
            .join("vectors")
            .join(format!("{}.bin", file_stem(id)))
    }

    pub fn read_manifest(&self) -> Result<Option<Manifest>> {
        read_json_opt(&self.manifest_path())
    }

    pub fn read_failures(&self) -> Result<Failures> {
        Ok(read_json_opt(&self.failures_path())?.unwrap_or_default())
    }
}

pub fn read_json_opt<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    match std::fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| data_error(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_atomic(path, text.as_bytes())
}

/// Writes through a temporary sibling so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

pub fn encode_vector(v: &FeatureVector) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(VECTOR_MAGIC);
    out.push(FORMAT_VERSION);
    match v {
        FeatureVector::Dense { values } => {
            out.push(0);
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for x in values {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        FeatureVector::Sparse(s) => {
            out.push(1);
            out.extend_from_slice(&(s.dim as u64).to_le_bytes());
            out.extend_from_slice(&(s.indices.len() as u64).to_le_bytes());
            for (&i, &x) in s.indices.iter().zip(&s.values) {
                out.extend_from_slice(&i.to_le_bytes());
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<usize> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn f32(&mut self) -> Option<f32> {
        self.take(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn decode_vector(bytes: &[u8]) -> Option<FeatureVector> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != VECTOR_MAGIC || r.u8()? != FORMAT_VERSION {
        return None;
    }
    let v = match r.u8()? {
        0 => {
            let n = r.u64()?;
            let values = (0..n).map(|_| r.f64()).collect::<Option<Vec<_>>>()?;
            FeatureVector::dense(values)
        }
        1 => {
            let dim = r.u64()?;
            let nnz = r.u64()?;
            let mut pairs = Vec::with_capacity(nnz.min(1 << 20));
            for _ in 0..nnz {
                pairs.push((r.u32()?, r.f64()?));
            }
            if pairs.iter().any(|&(i, _)| i as usize >= dim) {
                return None;
            }
            FeatureVector::Sparse(SparseVector::from_pairs(dim, pairs))
        }
        _ => return None,
    };
    r.done().then_some(v)
}

pub fn encode_descriptors(set: &LocalDescriptorSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + set.data.len() * 4 + set.len() * 24);
    out.extend_from_slice(DESCRIPTOR_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    for loc in &set.locations {
        for v in [loc.x, loc.y, loc.scale] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in &set.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_descriptors(bytes: &[u8]) -> Option<LocalDescriptorSet> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != DESCRIPTOR_MAGIC || r.u8()? != FORMAT_VERSION {
        return None;
    }
    let n = r.u64()?;
    let mut locations = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        locations.push(DescriptorLocation {
            x: r.f64()?,
            y: r.f64()?,
            scale: r.f64()?,
        });
    }
    let data = (0..n * DESCRIPTOR_DIM)
        .map(|_| r.f32())
        .collect::<Option<Vec<_>>>()?;
    r.done().then_some(LocalDescriptorSet { data, locations })
}

pub fn read_vector(path: &Path) -> Result<FeatureVector> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_vector(&bytes)
        .ok_or_else(|| data_error(format!("corrupt cache file {}", path.display())))
}

pub fn read_descriptors(path: &Path) -> Result<LocalDescriptorSet> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_descriptors(&bytes)
        .ok_or_else(|| data_error(format!("corrupt cache file {}", path.display())))
}
