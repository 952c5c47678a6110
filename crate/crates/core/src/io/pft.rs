//! PFT tensor files.
//!
//! Layout: the magic `PFT1`, a little-endian `u32` rank, `rank` little-endian
//! `u32` dimensions, then the product of the dimensions as little-endian `f32`
//! values in row-major order (last dimension fastest).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PFT1";

/// Upper bound on the number of stored values (16 GiB of payload).
const MAX_ELEMENTS: u64 = 1 << 32;
const MAX_RANK: u32 = 16;

/// A dense f32 tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected = element_count(&dims)?;
        if expected != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "dims {dims:?} require {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(4).ok_or_else(|| truncated("magic"))?;
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let rank = cursor.u32().ok_or_else(|| truncated("rank"))?;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::Format(format!("unsupported rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let d = cursor.u32().ok_or_else(|| truncated("dimensions"))?;
            dims.push(d as usize);
        }
        let count = element_count(&dims)?;
        let payload = cursor
            .take(count * 4)
            .ok_or_else(|| truncated("payload"))?;
        if cursor.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - cursor.pos
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Tensor { dims, data })
    }
}

fn truncated(what: &str) -> Error {
    Error::Format(format!("truncated file while reading {what}"))
}

fn element_count(dims: &[usize]) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::Format("zero dimension".into()));
    }
    let mut total: u64 = 1;
    for &d in dims {
        if d as u64 > u32::MAX as u64 {
            return Err(Error::Format(format!("dimension {d} exceeds u32")));
        }
        total = total
            .checked_mul(d as u64)
            .filter(|&t| t <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Format(format!("dimension overflow in {dims:?}")))?;
    }
    usize::try_from(total).map_err(|_| Error::Format(format!("dimension overflow in {dims:?}")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_pft(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

pub fn write_pft(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(dims: &[u32]) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            b.extend_from_slice(&d.to_le_bytes());
        }
        b
    }

    #[test]
    fn layout_is_little_endian() {
        let t = Tensor::new(vec![1, 1, 2], vec![1.0, -2.5]).unwrap();
        let bytes = t.to_bytes();
        let mut expected = header(&[1, 1, 2]);
        expected.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f]);
        expected.extend_from_slice(&[0x00, 0x00, 0x20, 0xc0]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn zero_dimension_rejected() {
        let err = Tensor::from_bytes(&header(&[0, 5, 3])).unwrap_err();
        assert!(err.to_string().contains("zero dimension"), "{err}");
    }

    #[test]
    fn bad_magic_rejected() {
        let mut b = header(&[1]);
        b[0] = b'X';
        b.extend_from_slice(&0f32.to_le_bytes());
        assert!(Tensor::from_bytes(&b).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut b = header(&[2, 2]);
        b.extend_from_slice(&[0u8; 12]);
        assert!(Tensor::from_bytes(&b).unwrap_err().to_string().contains("truncated"));
    }

    #[test]
    fn overflowing_dims_rejected() {
        let b = header(&[u32::MAX, u32::MAX, 4]);
        assert!(Tensor::from_bytes(&b).unwrap_err().to_string().contains("overflow"));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut b = header(&[1]);
        b.extend_from_slice(&[0u8; 5]);
        assert!(Tensor::from_bytes(&b).is_err());
    }
}
