//! Flat checkpoint archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "TCRCKPT\0"
//! version  u32      1
//! manifest u64 length + UTF-8 JSON
//! count    u64      number of entries
//! entry    u32 name length, UTF-8 name,
//!          u32 rank, rank x u64 dims,
//!          product(dims) x f32 payload
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Float, ParamStore, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TCRCKPT\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub manifest: serde_json::Value,
    pub entries: Vec<NamedTensor>,
}

impl Checkpoint {
    /// Copies entries into `store` by name; every stored parameter must be
    /// present with a matching shape.
    pub fn restore_into<T: Float>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let fail = |reason: String| Error::Checkpoint {
            path: "<memory>".into(),
            reason,
        };
        if self.entries.len() != store.len() {
            return Err(fail(format!(
                "archive has {} entries, model has {} parameters",
                self.entries.len(),
                store.len()
            )));
        }
        for e in &self.entries {
            let id = store
                .id(&e.name)
                .ok_or_else(|| fail(format!("unknown parameter {}", e.name)))?;
            let p = store.get_mut(id);
            if p.value.shape() != e.shape.as_slice() {
                return Err(fail(format!(
                    "shape mismatch for {}: {:?} vs {:?}",
                    e.name,
                    p.value.shape(),
                    e.shape
                )));
            }
            p.value = Tensor::new(
                e.shape.clone(),
                e.data
                    .iter()
                    .map(|x| T::from_f64_lossy(*x as f64))
                    .collect(),
            )?;
        }
        Ok(())
    }
}

pub fn save_checkpoint<T: Float>(
    path: &Path,
    manifest: &serde_json::Value,
    params: &ParamStore<T>,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let manifest = serde_json::to_vec(manifest)?;
    w.write_all(&(manifest.len() as u64).to_le_bytes())?;
    w.write_all(&manifest)?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params.iter() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&(p.value.shape().len() as u32).to_le_bytes())?;
        for d in p.value.shape() {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for x in p.value.data() {
            w.write_all(&x.as_f32().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let fail = |reason: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
    };
    if r.take(8) != Some(MAGIC.as_slice()) {
        return Err(fail("bad magic"));
    }
    if r.u32() != Some(VERSION) {
        return Err(fail("unsupported version"));
    }
    let mlen = r.u64().ok_or_else(|| fail("truncated manifest length"))? as usize;
    let manifest = serde_json::from_slice(r.take(mlen).ok_or_else(|| fail("truncated manifest"))?)?;
    let count = r.u64().ok_or_else(|| fail("truncated entry count"))?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let nlen = r.u32().ok_or_else(|| fail("truncated name"))? as usize;
        let name = std::str::from_utf8(r.take(nlen).ok_or_else(|| fail("truncated name"))?)
            .map_err(|_| fail("name is not UTF-8"))?
            .to_string();
        let rank = r.u32().ok_or_else(|| fail("truncated rank"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64().ok_or_else(|| fail("truncated dims"))? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = r
            .take(n.checked_mul(4).ok_or_else(|| fail("payload overflow"))?)
            .ok_or_else(|| fail("truncated payload"))?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push(NamedTensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(fail("trailing bytes"));
    }
    Ok(Checkpoint { manifest, entries })
}
