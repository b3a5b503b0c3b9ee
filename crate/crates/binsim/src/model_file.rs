//! BNNM model files: named tensors stored as `f32`.
//!
//! `BNNM`, a `u32` tensor count, then per tensor a `u32` name length, the
//! UTF-8 name, a `u32` rank, `rank` `u32` dimensions and the row-major
//! `f32` data. Integers and floats are little-endian.

use std::fs;
use std::path::Path;

use binsim_core::bnn::{NamedTensor, ToyModel};

use crate::error::{FileError, FormatError, Reader};

pub const MAGIC: [u8; 4] = *b"BNNM";

pub fn encode(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<NamedTensor>, FormatError> {
    let mut r = Reader::new(bytes, "BNNM");
    if r.take(4, "magic")? != MAGIC {
        return Err(r.error(0, "bad magic"));
    }
    let count = r.u32("tensor count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let at = r.pos();
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| r.error(at + 4, "tensor name is not UTF-8"))?
            .to_owned();
        let rank = r.u32("rank")? as usize;
        if rank > r.remaining() / 4 {
            return Err(r.error(bytes.len(), format!("truncated dims of `{name}`")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let elems = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&e| e <= r.remaining() / 4)
            .ok_or_else(|| r.error(bytes.len(), format!("truncated data of `{name}`")))?;
        let raw = r.take(elems * 4, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        out.push(NamedTensor { name, shape, data });
    }
    r.finish()?;
    Ok(out)
}

pub fn save(path: impl AsRef<Path>, model: &ToyModel) -> Result<(), FileError> {
    let path = path.as_ref();
    fs::write(path, encode(&model.export_tensors())).map_err(|e| FileError::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<Vec<NamedTensor>, FileError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FileError::io(path, e))?;
    decode(&bytes).map_err(|source| FileError::Format {
        path: path.into(),
        source,
    })
}
