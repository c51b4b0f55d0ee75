//! SPLF binary tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  "SPLF"          4 bytes
//! version u32            = 1
//! rank    u32
//! dims    u64 × rank
//! dtype   u8             0 = f32, 1 = u32
//! payload                row-major, little-endian
//! ```
//!
//! Feature maps are rank 3 (`height, width, channels`); per-Gaussian
//! features are rank 2 (`rows, channels`). The u32 dtype carries index
//! arrays such as graph CSR offsets.

use std::path::Path;

use super::{FeatureMap, GaussianFeatures};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPLF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    fn dtype(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::U32(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(dims: Vec<u64>, data: Vec<f32>) -> Result<Tensor> {
        Tensor::new(dims, TensorData::F32(data))
    }

    pub fn u32(dims: Vec<u64>, data: Vec<u32>) -> Result<Tensor> {
        Tensor::new(dims, TensorData::U32(data))
    }

    fn new(dims: Vec<u64>, data: TensorData) -> Result<Tensor> {
        let expected = dims.iter().product::<u64>();
        if expected != data.len() as u64 {
            return Err(Error::validation(format!(
                "tensor dims {dims:?} hold {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(self.data.dtype());
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Tensor> {
        let err = |offset: usize, msg: String| Error::format("splf", format!("at byte {offset}: {msg}"));
        let take = |offset: usize, n: usize| -> Result<&[u8]> {
            bytes.get(offset..offset + n).ok_or_else(|| {
                err(
                    offset,
                    format!("truncated header: need {n} bytes, {} available", bytes.len().saturating_sub(offset)),
                )
            })
        };
        if take(0, 4)? != MAGIC {
            return Err(err(0, "bad magic".into()));
        }
        let version = u32::from_le_bytes(take(4, 4)?.try_into().unwrap());
        if version != VERSION {
            return Err(err(4, format!("unsupported version {version}")));
        }
        let rank = u32::from_le_bytes(take(8, 4)?.try_into().unwrap()) as usize;
        if rank > 16 {
            return Err(err(8, format!("implausible rank {rank}")));
        }
        let mut offset = 12;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u64::from_le_bytes(take(offset, 8)?.try_into().unwrap()));
            offset += 8;
        }
        let dtype = take(offset, 1)?[0];
        if dtype > 1 {
            return Err(err(offset, format!("unknown dtype {dtype}")));
        }
        offset += 1;
        let count = dims
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d))
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| err(12, format!("dims {dims:?} overflow")))?;
        let payload = &bytes[offset..];
        let expected = count.checked_mul(4).ok_or_else(|| err(12, "payload size overflow".into()))?;
        if payload.len() != expected {
            return Err(err(
                offset,
                format!("payload length mismatch: expected {expected} bytes, found {}", payload.len()),
            ));
        }
        let words = payload.chunks_exact(4).map(|b| [b[0], b[1], b[2], b[3]]);
        let data = if dtype == 0 {
            TensorData::F32(words.map(f32::from_le_bytes).collect())
        } else {
            TensorData::U32(words.map(u32::from_le_bytes).collect())
        };
        Ok(Tensor { dims, data })
    }

    pub fn read(path: &Path) -> Result<Tensor> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Tensor::decode(&bytes).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    fn into_f32(self, what: &str) -> Result<(Vec<u64>, Vec<f32>)> {
        match self.data {
            TensorData::F32(v) => Ok((self.dims, v)),
            TensorData::U32(_) => Err(Error::format("splf", format!("{what} must be f32"))),
        }
    }
}

impl From<&FeatureMap> for Tensor {
    fn from(m: &FeatureMap) -> Tensor {
        Tensor {
            dims: vec![m.height as u64, m.width as u64, m.channels as u64],
            data: TensorData::F32(m.data.clone()),
        }
    }
}

impl From<&GaussianFeatures> for Tensor {
    fn from(f: &GaussianFeatures) -> Tensor {
        Tensor {
            dims: vec![f.rows as u64, f.channels as u64],
            data: TensorData::F32(f.values.clone()),
        }
    }
}

impl TryFrom<Tensor> for FeatureMap {
    type Error = Error;

    /// Rank 2 tensors are read as single-channel maps.
    fn try_from(t: Tensor) -> Result<FeatureMap> {
        let (dims, data) = t.into_f32("feature map")?;
        let (h, w, c) = match dims.as_slice() {
            [h, w, c] => (*h, *w, *c),
            [h, w] => (*h, *w, 1),
            _ => return Err(Error::format("splf", format!("feature map needs rank 3, got dims {dims:?}"))),
        };
        FeatureMap::from_vec(h as usize, w as usize, c as usize, data)
    }
}

impl TryFrom<Tensor> for GaussianFeatures {
    type Error = Error;

    fn try_from(t: Tensor) -> Result<GaussianFeatures> {
        let (dims, data) = t.into_f32("Gaussian features")?;
        let (n, c) = match dims.as_slice() {
            [n, c] => (*n, *c),
            [n] => (*n, 1),
            _ => return Err(Error::format("splf", format!("Gaussian features need rank 2, got dims {dims:?}"))),
        };
        GaussianFeatures::from_vec(n as usize, c as usize, data)
    }
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap> {
    FeatureMap::try_from(Tensor::read(path)?)
}

pub fn write_feature_map(map: &FeatureMap, path: &Path) -> Result<()> {
    Tensor::from(map).write(path)
}

pub fn read_gaussian_features(path: &Path) -> Result<GaussianFeatures> {
    GaussianFeatures::try_from(Tensor::read(path)?)
}

pub fn write_gaussian_features(f: &GaussianFeatures, path: &Path) -> Result<()> {
    Tensor::from(f).write(path)
}
