//! `DPUT` binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 4            | magic `DPUT`                              |
//! | 4            | `u32` version (currently 1)               |
//! | 4            | `u32` rank                                |
//! | 4 × rank     | `u32` dims                                |
//! | 4 × Π dims   | `f32` payload, row-major                  |
//! | dims\[0\]    | one label byte per leading-axis record    |
//!
//! Label bytes are `0` (non-seizure), `1` (seizure) or `255` (unlabeled).

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DPUT";
pub const VERSION: u32 = 1;
pub const UNLABELED: u8 = 255;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        let count: usize = dims.iter().product();
        if dims.is_empty() {
            return Err(Error::Format("rank must be at least 1".into()));
        }
        if data.len() != count {
            return Err(Error::shape(count, data.len()));
        }
        if labels.len() != dims[0] {
            return Err(Error::shape(format!("{} labels", dims[0]), labels.len()));
        }
        Ok(Self { dims, data, labels })
    }

    /// Stacks equally shaped records along a new leading axis.
    pub fn stack(records: &[Vec<f64>], record_dims: &[usize], labels: Vec<u8>) -> Result<Self> {
        let per: usize = record_dims.iter().product();
        let mut data = Vec::with_capacity(per * records.len());
        for r in records {
            if r.len() != per {
                return Err(Error::shape(per, r.len()));
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        let mut dims = vec![records.len()];
        dims.extend_from_slice(record_dims);
        Self::new(dims, data, labels)
    }

    pub fn record_len(&self) -> usize {
        self.dims[1..].iter().product()
    }

    pub fn record(&self, i: usize) -> &[f32] {
        let n = self.record_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.write_all(&self.labels)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("missing DPUT magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported DPUT version {version}")));
        }
        let rank = cur.u32()? as usize;
        if rank == 0 {
            return Err(Error::Format("rank must be at least 1".into()));
        }
        let dims = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let payload = cur.take(count * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let labels = cur.take(dims[0])?.to_vec();
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        Self::new(dims, data, labels)
    }
}

pub(crate) struct Cursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                needed: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
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

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
