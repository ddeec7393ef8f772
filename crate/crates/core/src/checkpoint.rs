//! Binary tensor container with a JSON metadata trailer.
//!
//! Layout (all integers little-endian): `b"HYPD"`, `u32` version, `u32`
//! tensor count, then per tensor a `u16` name length, the UTF-8 name, a `u8`
//! rank, `rank` `u32` dims and the row-major `f64` payload. Everything after
//! the last tensor is the metadata as UTF-8 JSON.

use std::path::Path;

use ndarray::Array2;
use serde_json::Value;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HYPD";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<Tensor>,
    pub metadata: Value,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated file"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn new(metadata: Value) -> Self {
        Self { tensors: Vec::new(), metadata }
    }

    pub fn push_matrix(&mut self, name: impl Into<String>, m: &Array2<f64>) {
        self.tensors.push(Tensor {
            name: name.into(),
            shape: vec![m.nrows(), m.ncols()],
            data: m.iter().copied().collect(),
        });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// The named rank-2 tensor as a matrix.
    pub fn matrix(&self, name: &str) -> Result<Array2<f64>> {
        let t = self.get(name).ok_or_else(|| bad(format!("missing tensor {name}")))?;
        match t.shape[..] {
            [r, c] => Array2::from_shape_vec((r, c), t.data.clone()).map_err(|e| bad(format!("{name}: {e}"))),
            _ => Err(bad(format!("{name} has rank {}, expected 2", t.shape.len()))),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = u32::try_from(self.tensors.len()).map_err(|_| bad("too many tensors"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for t in &self.tensors {
            let name_len = u16::try_from(t.name.len()).map_err(|_| bad(format!("tensor name too long: {}", t.name)))?;
            let rank = u8::try_from(t.shape.len()).map_err(|_| bad(format!("{}: rank too large", t.name)))?;
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(bad(format!("{}: shape {:?} does not match {} values", t.name, t.shape, t.data.len())));
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(rank);
            for &d in &t.shape {
                let d = u32::try_from(d).map_err(|_| bad(format!("{}: dimension too large", t.name)))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(serde_json::to_string(&self.metadata)?.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4).map_err(|_| bad("not a checkpoint"))? != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| bad("tensor name is not UTF-8"))?.to_string();
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let bytes = r.take(n.checked_mul(8).ok_or_else(|| bad("tensor too large"))?)?;
            let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            tensors.push(Tensor { name, shape, data });
        }
        let metadata = serde_json::from_slice(&buf[r.pos..])?;
        Ok(Self { tensors, metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new(json!({"c": 1.0, "k": 3, "mu": [[0.1, -0.30000000000000004]], "w": 1e-300}));
        ck.push_matrix("a", &Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f64 / 7.0));
        ck.push_matrix("b.w", &Array2::from_elem((1, 1), f64::MIN_POSITIVE));
        ck.tensors.push(Tensor { name: "v".into(), shape: vec![4], data: vec![1.0, -0.0, 2.5, 1e100] });
        ck
    }

    #[test]
    fn exact_layout() {
        let mut ck = Checkpoint::new(json!({}));
        ck.push_matrix("x", &Array2::from_elem((1, 2), 1.5));
        let bytes = ck.to_bytes().unwrap();
        let mut want = b"HYPD".to_vec();
        want.extend([1, 0, 0, 0, 1, 0, 0, 0, 1, 0, b'x', 2, 1, 0, 0, 0, 2, 0, 0, 0]);
        want.extend(1.5f64.to_le_bytes());
        want.extend(1.5f64.to_le_bytes());
        want.extend(b"{}");
        assert_eq!(bytes, want);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.hypd");
        let ck = sample();
        ck.save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), first);
        assert_eq!(back.matrix("a").unwrap(), Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f64 / 7.0));
        assert!(back.matrix("v").is_err());
        assert!(back.matrix("nope").is_err());
    }

    #[test]
    fn rejects_corrupt_input() {
        let bytes = sample().to_bytes().unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad_magic).is_err());
        let mut bad_version = bytes.clone();
        bad_version[4] = 2;
        assert!(matches!(Checkpoint::from_bytes(&bad_version), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::from_bytes(&bytes[..30]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"").is_err());
    }
}
