//! Flat binary arrays with a small header, used for embedding dumps and
//! latent files.
//!
//! Layout (little-endian): magic `FFAR`, `u16` version, `u8` dtype tag
//! (1 = f32, 2 = f64), `u8` rank, `rank × u32` dims, then the values.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FFAR";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 1,
    F64 = 2,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatArray {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl FlatArray {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != values.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: values.len(),
                context: "array values vs dims",
            });
        }
        Ok(Self { dims, values })
    }

    pub fn write_to<W: Write>(&self, w: &mut W, dtype: DType) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[dtype as u8, self.dims.len() as u8])?;
        for &d in &self.dims {
            let d = u32::try_from(d).map_err(|_| Error::Format("array dimension exceeds u32".into()))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for &v in &self.values {
            match dtype {
                DType::F32 => w.write_all(&(v as f32).to_le_bytes())?,
                DType::F64 => w.write_all(&v.to_le_bytes())?,
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self, dtype: DType) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out, dtype).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut head = [0u8; 8];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(Error::Format("not a facefuse array (bad magic)".into()));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported array version {version}")));
        }
        let dtype = match head[6] {
            1 => DType::F32,
            2 => DType::F64,
            t => return Err(Error::Format(format!("unknown dtype tag {t}"))),
        };
        let rank = head[7] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            dims.push(u32::from_le_bytes(b) as usize);
        }
        let n: usize = dims.iter().product();
        let mut raw = vec![0u8; n * dtype.size()];
        r.read_exact(&mut raw)?;
        let values = match dtype {
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk")) as f64)
                .collect(),
            DType::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk")))
                .collect(),
        };
        Self::new(dims, values)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let a = Self::read_from(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(Error::Format("trailing bytes after array".into()));
        }
        Ok(a)
    }

    pub fn save(&self, path: impl AsRef<Path>, dtype: DType) -> Result<()> {
        std::fs::write(path, self.to_bytes(dtype))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_both_dtypes() {
        let a = FlatArray::new(vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-3, 7.0]).unwrap();
        assert_eq!(FlatArray::from_bytes(&a.to_bytes(DType::F64)).unwrap(), a);
        let b = FlatArray::from_bytes(&a.to_bytes(DType::F32)).unwrap();
        assert_eq!(b.dims, a.dims);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(FlatArray::from_bytes(b"nope").is_err());
        let a = FlatArray::new(vec![2], vec![1.0, 2.0]).unwrap();
        let mut bytes = a.to_bytes(DType::F32);
        bytes.push(0);
        assert!(FlatArray::from_bytes(&bytes).is_err());
        assert!(FlatArray::new(vec![3], vec![1.0]).is_err());
    }
}
