//! `CMT1` layout, little-endian throughout:
//!
//! ```text
//! "CMT1" | u32 ndim | ndim x u32 dims | u32 dtype (1 = f32, 2 = u8) | payload
//! ```
//!
//! No padding and no footer.

use std::fs;
use std::path::Path;

use super::tensor::{check_shape, DType, Tensor, TensorData};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CMT1";

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let shape = t.shape();
    let mut out = Vec::with_capacity(12 + 4 * shape.len() + t.len() * t.dtype().size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&t.dtype().code().to_le_bytes());
    match t.data() {
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::U8(v) => out.extend_from_slice(v),
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::CorruptFile(format!("truncated header while reading {what}"))
        })?;
        self.pos = end;
        Ok(u32::from_le_bytes(chunk.try_into().unwrap()))
    }
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing CMT1 magic".into()));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let ndim = cur.u32("ndim")? as usize;
    if ndim == 0 || ndim > 4 {
        return Err(Error::Format(format!("unsupported rank {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for i in 0..ndim {
        shape.push(cur.u32(&format!("dim {i}"))? as usize);
    }
    let code = cur.u32("dtype")?;
    let dtype = DType::from_code(code)
        .ok_or_else(|| Error::Format(format!("unknown dtype code {code}")))?;
    let count = check_shape(&shape)?;
    let payload = &bytes[cur.pos..];
    let expected = count
        .checked_mul(dtype.size())
        .ok_or_else(|| Error::CorruptFile(format!("payload size of {shape:?} overflows")))?;
    if payload.len() != expected {
        return Err(Error::CorruptFile(format!(
            "shape {shape:?} needs {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    let data = match dtype {
        DType::F32 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DType::U8 => TensorData::U8(payload.to_vec()),
    };
    Tensor::new(shape, data)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes).map_err(|e| e.in_file(path))
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// half-written tensor.
pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    check_shape(t.shape())?;
    crate::pipeline::write_atomic(path.as_ref(), &encode_tensor(t))
}
