//! Binary weight files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"LCNN"  u32 version  u32 entry count
//! per entry: u32 name length, UTF-8 name, u32 rank, rank x u32 extents,
//!            product(extents) x f32 values
//! ```
//!
//! Entries cover every parameter and batch-norm running statistic, named like
//! `conv1.kernels` or `bn2.running_var`. Values are stored as f32; f64 models
//! are narrowed on save.

use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

use super::network::Model;
use super::spec::ModelSpec;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"LCNN";
pub const WEIGHTS_VERSION: u32 = 1;

/// Serialize every named tensor of `model`.
pub fn write_weights<T: Real>(model: &Model<T>) -> Vec<u8> {
    let entries = model.named_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

pub fn save_weights<T: Real>(model: &Model<T>, path: &Path) -> Result<()> {
    std::fs::write(path, write_weights(model)).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::CorruptWeights(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parse a weight file into named tensors.
pub fn read_weights<T: Real>(bytes: &[u8]) -> Result<Vec<(String, Tensor<T>)>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != WEIGHTS_MAGIC {
        return Err(Error::CorruptWeights("bad magic bytes".into()));
    }
    let version = c.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::CorruptWeights(format!(
            "unsupported version {version}, expected {WEIGHTS_VERSION}"
        )));
    }
    let count = c.u32("entry count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::CorruptWeights("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(c.u32("extent")? as usize);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| Error::CorruptWeights(format!("`{name}` has implausible extents {dims:?}")))?;
        let raw = c.take(numel * 4, &format!("values of `{name}`"))?;
        let data = raw
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64))
            .collect();
        let t = Tensor::from_vec(dims, data)
            .map_err(|e| Error::CorruptWeights(format!("`{name}`: {e}")))?;
        out.push((name, t));
    }
    if c.pos != bytes.len() {
        return Err(Error::CorruptWeights(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - c.pos
        )));
    }
    Ok(out)
}

/// Build a model for `spec` and fill it from the file at `path`.
pub fn load_weights<T: Real>(path: &Path, spec: &ModelSpec) -> Result<Model<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let entries = read_weights(&bytes)?;
    let mut model = Model::new(spec.clone(), &mut crate::rng::Rng::new(0))?;
    model.load_named(entries)?;
    Ok(model)
}
