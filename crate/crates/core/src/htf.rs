//! HTF tensor files.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 0..4         | magic `HTF1`                              |
//! | 4            | dtype code (1 = f32, 2 = f64)             |
//! | 5            | rank R, at most 8                         |
//! | 6..6+8R      | R dimensions as u64                       |
//! | rest         | row-major IEEE-754 payload                |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"HTF1";
pub const MAX_RANK: usize = 8;

/// Cursor over a byte buffer that reports short reads as [`Error::Truncated`].
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn is_at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub(crate) fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(what))?;
        if end > self.buf.len() {
            return Err(Error::Truncated(what));
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self, what: &'static str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let found = self.take(4, "magic")?;
        if found != expected {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }
}

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 8 * t.rank() + T::DTYPE.size() * t.len());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.as_slice() {
        v.write_le(&mut out);
    }
    out
}

pub(crate) fn read_tensor<T: Scalar>(r: &mut ByteReader<'_>) -> Result<Tensor<T>> {
    r.magic(MAGIC)?;
    let code = r.u8("dtype")?;
    let dtype = DType::from_code(code).ok_or(Error::UnknownDtype(code))?;
    let rank = r.u8("rank")? as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Malformed(format!("rank {rank} outside 1..={MAX_RANK}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = r.u64("dimensions")?;
        shape.push(usize::try_from(d).map_err(|_| Error::Malformed("dimension overflow".into()))?);
    }
    if dtype != T::DTYPE {
        return Err(Error::DtypeMismatch {
            found: dtype.name(),
            requested: T::DTYPE.name(),
        });
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Malformed("element count overflow".into()))?;
    let size = dtype.size();
    let payload = r.take(
        count.checked_mul(size).ok_or(Error::Truncated("payload"))?,
        "payload",
    )?;
    let data = payload.chunks_exact(size).map(T::read_le).collect();
    Tensor::from_vec(&shape, data)
}

/// Decode a complete HTF buffer; trailing bytes are rejected.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let mut r = ByteReader::new(bytes);
    let t = read_tensor(&mut r)?;
    if !r.is_at_end() {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.position()
        )));
    }
    Ok(t)
}

pub fn save<T: Scalar>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(t))?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    decode(&fs::read(path)?)
}
