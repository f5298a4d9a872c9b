use std::collections::HashMap;
use std::path::Path;

use super::{Param, Scalar};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ANNM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub(crate) fn encode<T: Scalar>(params: &[&Param<T>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Tensors of a checkpoint as `(name, shape, values)`.
pub(crate) fn decode(bytes: &[u8]) -> Result<Vec<(String, Vec<usize>, Vec<f32>)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format("not a model checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::format("checkpoint tensor name is not UTF-8"))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let payload = r.take(n.checked_mul(4).ok_or_else(|| Error::format("tensor too large"))?)?;
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        out.push((name, shape, values));
    }
    Ok(out)
}

/// Writes every parameter, including non-trainable buffers.
pub fn save_checkpoint<T: Scalar>(path: &Path, params: &[&Param<T>]) -> Result<()> {
    std::fs::write(path, encode(params)).map_err(|e| Error::from(e).at(path))
}

/// Restores parameters by name. Every parameter must be present with the
/// same shape and the file must not contain unknown tensors.
pub fn load_checkpoint<T: Scalar>(path: &Path, params: Vec<&mut Param<T>>) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
    restore(&bytes, params).map_err(|e| e.at(path))
}

pub(crate) fn restore<T: Scalar>(bytes: &[u8], params: Vec<&mut Param<T>>) -> Result<()> {
    let mut stored: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::new();
    for (name, shape, values) in decode(bytes)? {
        if stored.insert(name.clone(), (shape, values)).is_some() {
            return Err(Error::format(format!("tensor '{name}' stored twice")));
        }
    }
    for p in params {
        let (shape, values) = stored
            .remove(&p.name)
            .ok_or_else(|| Error::format(format!("checkpoint lacks tensor '{}'", p.name)))?;
        if shape != p.value.shape() {
            return Err(Error::format(format!(
                "tensor '{}' has shape {shape:?}, model expects {:?}",
                p.name,
                p.value.shape()
            )));
        }
        for (d, v) in p.value.data_mut().iter_mut().zip(values) {
            *d = T::lit(v as f64);
        }
    }
    if let Some(extra) = stored.keys().next() {
        return Err(Error::format(format!("checkpoint has unexpected tensor '{extra}'")));
    }
    Ok(())
}
