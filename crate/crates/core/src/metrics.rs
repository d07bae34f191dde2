//! Reconstruction quality metrics and image output.
//!
//! k-space SNR is `20·log10(‖ref‖_F / ‖rec − ref‖_F)` over the whole tensor,
//! capped at [`SNR_CAP_DB`] when the error vanishes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};
use crate::fft::centered_ifft_spatial;
use crate::tensor::{KTensor, Shape5};

pub const SNR_CAP_DB: f64 = 300.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kspace_snr_db: f64,
    /// SSoS magnitude-image SNR pooled over all frames.
    pub image_snr_db: f64,
    pub outer_iters: usize,
    pub wall_time_s: f64,
    pub peak_bytes: usize,
    pub delta_history: Vec<f64>,
}

fn snr_from_norms(signal: f64, error: f64) -> f64 {
    if error == 0.0 {
        return SNR_CAP_DB;
    }
    (20.0 * (signal / error).log10()).min(SNR_CAP_DB)
}

pub fn kspace_snr_db(reference: &KTensor, rec: &KTensor) -> Result<f64> {
    let err = reference.distance(rec)?;
    Ok(snr_from_norms(reference.norm(), err))
}

/// Real-valued volume `(nx, ny, nz)`, column-major with `x` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl RealImage {
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    fn check_same(&self, other: &RealImage) -> Result<()> {
        if self.dims != other.dims {
            return Err(CfError::ShapeMismatch(format!(
                "image dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

/// Square root of the sum of squared coil magnitudes of frame `t`.
pub fn ssos_image(d: &KTensor, t: usize) -> Result<RealImage> {
    let s = d.shape();
    if t >= s.nt {
        return Err(CfError::IndexOutOfRange(format!("frame {t} of {}", s.nt)));
    }
    let spatial = Shape5::new(s.nx, s.ny, s.nz, 1, 1)?;
    let n = spatial.len();
    let mut acc = vec![0.0; n];
    for l in 0..s.nc {
        let coil = d.sub_tensor([0, 0, 0, l, t], spatial)?;
        let img = centered_ifft_spatial(&coil);
        for (a, z) in acc.iter_mut().zip(img.as_slice()) {
            *a += z.norm_sqr();
        }
    }
    acc.iter_mut().for_each(|a| *a = a.sqrt());
    Ok(RealImage {
        dims: [s.nx, s.ny, s.nz],
        data: acc,
    })
}

/// SSoS-image SNR, pooling every frame.
pub fn image_snr_db(reference: &KTensor, rec: &KTensor) -> Result<f64> {
    if reference.shape() != rec.shape() {
        return Err(CfError::ShapeMismatch(format!(
            "{} vs {}",
            reference.shape(),
            rec.shape()
        )));
    }
    let (mut sig, mut err) = (0.0, 0.0);
    for t in 0..reference.shape().nt {
        let a = ssos_image(reference, t)?;
        let b = ssos_image(rec, t)?;
        for (x, y) in a.data.iter().zip(&b.data) {
            sig += x * x;
            err += (x - y) * (x - y);
        }
    }
    Ok(snr_from_norms(sig.sqrt(), err.sqrt()))
}

/// Pixel values of the error map, `x` fastest, slices stacked along `y`.
pub fn error_map_pixels(reference: &RealImage, rec: &RealImage, scale: f64) -> Result<Vec<u16>> {
    reference.check_same(rec)?;
    if !(scale > 0.0) {
        return Err(CfError::InvalidConfig(format!("error-map scale must be positive, got {scale}")));
    }
    let peak = reference.max();
    Ok(reference
        .data
        .iter()
        .zip(&rec.data)
        .map(|(r, x)| {
            let v = if peak > 0.0 { scale * (x - r).abs() / peak } else { 0.0 };
            (v.clamp(0.0, 1.0) * 65535.0).round() as u16
        })
        .collect())
}

/// Writes a 16-bit binary PGM of `scale·|rec − ref| / max(ref)`. Width is
/// `nx`; for volumes the `nz` slices are stacked vertically.
pub fn error_map_pgm(reference: &RealImage, rec: &RealImage, scale: f64, path: impl AsRef<Path>) -> Result<()> {
    let px = error_map_pixels(reference, rec, scale)?;
    let [nx, ny, nz] = reference.dims;
    let mut out = format!("P5\n{nx} {}\n65535\n", ny * nz).into_bytes();
    out.reserve(px.len() * 2);
    for p in px {
        out.extend_from_slice(&p.to_be_bytes());
    }
    std::fs::File::create(path.as_ref())?.write_all(&out)?;
    Ok(())
}
