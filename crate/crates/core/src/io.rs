//! Little-endian binary container helpers shared by the dataset, moment-model
//! and checkpoint formats.
//!
//! Every container starts with a 4-byte ASCII magic, followed by little-endian
//! `u32` header fields and a flat numeric payload.

use crate::error::{Error, Result};
use std::path::Path;

pub const DATASET_MAGIC: &[u8; 4] = b"CGF1";
pub const MOMENT_MAGIC: &[u8; 4] = b"CGM1";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CGN1";

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        Writer { buf }
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn usize(&mut self, v: usize) -> Result<&mut Self> {
        let v = u32::try_from(v).map_err(|_| Error::DimensionOverflow)?;
        Ok(self.u32(v))
    }

    pub fn f32(&mut self, v: f32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64s(&mut self, vs: &[f64]) -> &mut Self {
        self.buf.reserve(vs.len() * 8);
        for &v in vs {
            self.f64(v);
        }
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(b);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks the magic and positions the cursor right after it.
    pub fn open(buf: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if buf.len() < 4 || &buf[..4] != magic {
            let found = String::from_utf8_lossy(&buf[..buf.len().min(4)]).into_owned();
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found,
            });
        }
        Ok(Reader { buf, pos: 4 })
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::TruncatedPayload {
                needed: n,
                available: self.remaining(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// Fails with `TruncatedPayload` unless `n` more bytes are available.
    pub fn require(&self, n: usize) -> Result<()> {
        if self.remaining() < n {
            return Err(Error::TruncatedPayload {
                needed: n,
                available: self.remaining(),
            });
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or(Error::DimensionOverflow)?;
        self.require(bytes)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }
}

/// Product of header dimensions with overflow detection.
pub fn checked_product(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::DimensionOverflow)
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_file(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    Ok(std::fs::read(path)?)
}
