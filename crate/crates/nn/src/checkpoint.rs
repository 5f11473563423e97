//! `CRNM` checkpoints: magic, u32 version, then one record per tensor
//! (u16 name length, name, u8 dtype, u8 rank, u32 dims, little-endian
//! payload) until end of file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::layers::Module;
use crate::real::Real;
use crate::tensor::Param;
use crate::{NnError, Result};

pub const MAGIC: &[u8; 4] = b"CRNM";
pub const VERSION: u32 = 1;

/// A tensor as stored, widened to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub dtype: u8,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub type Checkpoint = BTreeMap<String, StoredTensor>;

pub fn encode<T: Real>(params: &[(String, &Param<T>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, p) in params {
        let len = u16::try_from(name.len()).map_err(|_| NnError::Checkpoint(format!("name too long: {name}")))?;
        let rank = u8::try_from(p.value.shape.len()).map_err(|_| NnError::Checkpoint(format!("{name}: rank too high")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(T::DTYPE);
        out.push(rank);
        for &d in &p.value.shape {
            let d = u32::try_from(d).map_err(|_| NnError::Checkpoint(format!("{name}: dimension too large")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in &p.value.data {
            v.to_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut out = Checkpoint::new();
    while r.pos < bytes.len() {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| NnError::Checkpoint("name is not UTF-8".into()))?;
        let dtype = r.u8()?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let data = match dtype {
            0 => r.take(count * 4)?.chunks_exact(4).map(|c| f64::from(f32::from_le(c))).collect(),
            1 => r.take(count * 8)?.chunks_exact(8).map(f64::from_le).collect(),
            d => return Err(NnError::Checkpoint(format!("{name}: unknown dtype {d}"))),
        };
        if out.insert(name.clone(), StoredTensor { dtype, shape, data }).is_some() {
            return Err(NnError::Checkpoint(format!("duplicate tensor {name}")));
        }
    }
    Ok(out)
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path.file_name().ok_or_else(|| NnError::Checkpoint(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save<T: Real, M: Module<T> + ?Sized>(path: &Path, module: &M, prefix: &str) -> Result<()> {
    write_atomic(path, &encode(&module.named_params(prefix))?)
}

pub fn read(path: &Path) -> Result<Checkpoint> {
    decode(&fs::read(path)?)
}

/// Copies every parameter of `module` (named below `prefix`) from the
/// checkpoint; missing names and shape mismatches are errors.
pub fn restore<T: Real, M: Module<T> + ?Sized>(checkpoint: &Checkpoint, module: &mut M, prefix: &str) -> Result<()> {
    for (name, p) in module.named_params_mut(prefix) {
        let stored = checkpoint.get(&name).ok_or_else(|| NnError::Checkpoint(format!("missing tensor {name}")))?;
        if stored.shape != p.value.shape {
            return Err(NnError::Checkpoint(format!("{name}: shape {:?} != {:?}", stored.shape, p.value.shape)));
        }
        p.value.data = stored.data.iter().map(|&v| T::of(v)).collect();
    }
    Ok(())
}
