//! `.cfk` tensor files.
//!
//! A tensor `name.cfk` is a raw little-endian payload of interleaved
//! `(re, im)` values in column-major `(kx, ky, kz, coil, t)` order, next to a
//! JSON header `name.cfk.json`. Masks use the same scheme with one `u8` per
//! sample.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};
use crate::tensor::{KTensor, Mask, Shape5, C64};

pub const FORMAT_VERSION: u32 = 1;
pub const ORDER: &str = "col-major kx,ky,kz,coil,t";
pub const ENDIAN: &str = "little";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    C64,
    C128,
    U8,
}

impl Dtype {
    fn sample_bytes(self) -> usize {
        match self {
            Dtype::C64 => 8,
            Dtype::C128 => 16,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format_version: u32,
    pub dims: [usize; 5],
    pub dtype: Dtype,
    pub order: String,
    pub endian: String,
}

impl Header {
    pub fn new(shape: Shape5, dtype: Dtype) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            dims: shape.dims(),
            dtype,
            order: ORDER.to_string(),
            endian: ENDIAN.to_string(),
        }
    }

    fn validate(&self) -> Result<Shape5> {
        if self.format_version != FORMAT_VERSION {
            return Err(CfError::Format(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.order != ORDER {
            return Err(CfError::Format(format!("unsupported order '{}'", self.order)));
        }
        if self.endian != ENDIAN {
            return Err(CfError::Format(format!("unsupported endian '{}'", self.endian)));
        }
        Shape5::from_dims(self.dims).map_err(|e| CfError::Format(format!("bad dims: {e}")))
    }
}

/// Path of the JSON header belonging to a payload path.
pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_pair(path: &Path, header: &Header, payload: &[u8]) -> Result<()> {
    fs::write(path, payload)?;
    fs::write(header_path(path), serde_json::to_string_pretty(header)? + "\n")?;
    Ok(())
}

fn read_pair(path: &Path) -> Result<(Header, Shape5, Vec<u8>)> {
    let text = fs::read_to_string(header_path(path))?;
    let header: Header =
        serde_json::from_str(&text).map_err(|e| CfError::Format(format!("malformed header: {e}")))?;
    let shape = header.validate()?;
    let payload = fs::read(path)?;
    let want = shape.len() * header.dtype.sample_bytes();
    if payload.len() != want {
        return Err(CfError::Format(format!(
            "payload holds {} bytes but header {shape} with dtype {:?} needs {want}",
            payload.len(),
            header.dtype
        )));
    }
    Ok((header, shape, payload))
}

/// Writes `t` with the given complex precision. `Dtype::C64` rounds each
/// component to `f32`.
pub fn write_tensor_as(path: impl AsRef<Path>, t: &KTensor, dtype: Dtype) -> Result<()> {
    let mut payload = Vec::with_capacity(t.len() * dtype.sample_bytes());
    match dtype {
        Dtype::C128 => {
            for z in t.as_slice() {
                payload.extend_from_slice(&z.re.to_le_bytes());
                payload.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        Dtype::C64 => {
            for z in t.as_slice() {
                payload.extend_from_slice(&(z.re as f32).to_le_bytes());
                payload.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
        }
        Dtype::U8 => {
            return Err(CfError::Format("tensors must be written as c64 or c128".into()));
        }
    }
    write_pair(path.as_ref(), &Header::new(t.shape(), dtype), &payload)
}

/// Writes `t` losslessly as `c128`.
pub fn write_tensor(path: impl AsRef<Path>, t: &KTensor) -> Result<()> {
    write_tensor_as(path, t, Dtype::C128)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<KTensor> {
    let (header, shape, payload) = read_pair(path.as_ref())?;
    let data: Vec<C64> = match header.dtype {
        Dtype::C128 => payload
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect(),
        Dtype::C64 => payload
            .chunks_exact(8)
            .map(|c| {
                C64::new(
                    f32::from_le_bytes(c[..4].try_into().unwrap()) as f64,
                    f32::from_le_bytes(c[4..].try_into().unwrap()) as f64,
                )
            })
            .collect(),
        Dtype::U8 => {
            return Err(CfError::Format("expected a complex tensor, found dtype u8".into()));
        }
    };
    KTensor::from_vec(shape, data)
}

pub fn write_mask(path: impl AsRef<Path>, m: &Mask) -> Result<()> {
    let payload: Vec<u8> = m.as_slice().iter().map(|&b| b as u8).collect();
    write_pair(path.as_ref(), &Header::new(m.shape(), Dtype::U8), &payload)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let (header, shape, payload) = read_pair(path.as_ref())?;
    if header.dtype != Dtype::U8 {
        return Err(CfError::Format(format!(
            "expected a mask, found dtype {:?}",
            header.dtype
        )));
    }
    let data = payload
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(CfError::Format(format!("mask value {v} is not 0 or 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    Mask::from_vec(shape, data)
}
