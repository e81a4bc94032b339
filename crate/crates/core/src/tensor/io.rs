//! The `MHT1` tensor file format.
//!
//! Layout: `b"MHT1"`, a `u8` dtype tag (0 = f32, 1 = f64), a `u8` rank,
//! `rank` little-endian `u32` extents, then the raw little-endian values in
//! row-major order.

use std::io::{Read, Write};

use super::{DType, Real, Tensor};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"MHT1";

/// A tensor of either element type, as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    /// Converts to the requested element type.
    pub fn into_real<T: Real>(self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode_tensor<T: Real>(tensor: &Tensor<T>) -> Result<Vec<u8>> {
    let rank = u8::try_from(tensor.rank())
        .map_err(|_| Error::arg(format!("rank {} does not fit in a u8", tensor.rank())))?;
    let mut out = Vec::with_capacity(6 + 4 * tensor.rank() + tensor.numel() * T::DTYPE.size_of());
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(T::DTYPE.tag());
    out.push(rank);
    for &extent in tensor.shape() {
        let e = u32::try_from(extent)
            .map_err(|_| Error::arg(format!("extent {extent} does not fit in a u32")))?;
        out.extend_from_slice(&e.to_le_bytes());
    }
    for &v in tensor.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn write_tensor<T: Real>(mut w: impl Write, tensor: &Tensor<T>) -> Result<()> {
    w.write_all(&encode_tensor(tensor)?)?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated tensor {what}")),
        _ => Error::Io(e),
    })
}

fn decode_values<T: Real>(bytes: &[u8]) -> Vec<T> {
    bytes.chunks_exact(T::DTYPE.size_of()).map(T::read_le).collect()
}

/// Reads one tensor; returns `Ok(None)` on a clean end of stream.
pub fn read_tensor_opt(mut r: impl Read) -> Result<Option<AnyTensor>> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let k = r.read(&mut magic[got..])?;
        if k == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(Error::Format("truncated tensor magic".into()));
        }
        got += k;
    }
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format(format!("bad tensor magic {magic:?}")));
    }
    let mut head = [0u8; 2];
    read_exact(&mut r, &mut head, "header")?;
    let dtype = DType::from_tag(head[0])?;
    let rank = head[1] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut e = [0u8; 4];
        read_exact(&mut r, &mut e, "extents")?;
        shape.push(u32::from_le_bytes(e) as usize);
    }
    if shape.contains(&0) {
        return Err(Error::Format("tensor file declares a zero extent".into()));
    }
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::Format("tensor extents overflow".into()))?;
    let nbytes = numel
        .checked_mul(dtype.size_of())
        .ok_or_else(|| Error::Format("tensor payload overflows".into()))?;
    let mut payload = Vec::new();
    r.by_ref().take(nbytes as u64).read_to_end(&mut payload)?;
    if payload.len() != nbytes {
        return Err(Error::Format(format!(
            "truncated tensor payload: {} of {nbytes} bytes",
            payload.len()
        )));
    }
    let tensor = match dtype {
        DType::F32 => AnyTensor::F32(Tensor::new(shape, decode_values(&payload))?),
        DType::F64 => AnyTensor::F64(Tensor::new(shape, decode_values(&payload))?),
    };
    Ok(Some(tensor))
}

pub fn read_tensor(r: impl Read) -> Result<AnyTensor> {
    read_tensor_opt(r)?.ok_or_else(|| Error::Format("empty tensor file".into()))
}
