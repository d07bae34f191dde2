//! Slice-by-slice reconstruction of 3-D data with a fully sampled readout.
//!
//! The readout axis `kx` is inverse transformed first. Each hybrid slice
//! `(x, ky, kz)` is then an independent 2-D problem over `(ky, kz)` solved by
//! the outer CF loop, and the result is transformed back along `kx`.

use crate::error::{CfError, Result};
use crate::fft::{centered_dft_axis, Direction};
use crate::solver::{cf_reconstruct, ObservedData, ReconConfig, ReconResult};
use crate::tensor::{ConvKind, KTensor, Mask, Shape5};

/// Shape of one hybrid slice of `shape`.
pub fn slice_shape(shape: Shape5) -> Result<Shape5> {
    shape.with_dim(0, 1)
}

/// Inverse transform along `kx`.
pub fn to_hybrid(d: &KTensor) -> KTensor {
    let mut h = d.clone();
    centered_dft_axis(&mut h, 0, Direction::Inverse);
    h
}

/// Forward transform along `x`.
pub fn from_hybrid(h: &KTensor) -> KTensor {
    let mut d = h.clone();
    centered_dft_axis(&mut d, 0, Direction::Forward);
    d
}

/// Hybrid slice `x` as a tensor of shape `(1, ny, nz, nc, nt)`.
pub fn hybrid_slice(h: &KTensor, x: usize) -> Result<KTensor> {
    h.sub_tensor([x, 0, 0, 0, 0], slice_shape(h.shape())?)
}

/// Reconstructs each hybrid slice with `cfg_for(x)` and reassembles.
///
/// The mask must not depend on `kx`. Observed samples of the result equal
/// the input bit for bit.
pub fn cf_reconstruct_slicewise(
    obs: &ObservedData,
    mut cfg_for: impl FnMut(usize) -> ReconConfig,
) -> Result<Vec<ReconResult>> {
    let shape = obs.shape();
    let mask = obs.mask();
    let sshape = slice_shape(shape)?;
    let slice_mask = Mask::from_fn(sshape, |i| mask.get(i));
    for j in 0..shape.len() {
        let i = shape.unravel(j);
        if mask.get(i) != slice_mask.get([0, i[1], i[2], i[3], i[4]]) {
            return Err(CfError::InvalidConfig(
                "slice-wise reconstruction needs a mask that is constant along kx".into(),
            ));
        }
    }
    let hybrid = to_hybrid(obs.d_obs());
    let mut results = Vec::with_capacity(shape.nx);
    for x in 0..shape.nx {
        let cfg = cfg_for(x);
        if cfg.kernel_spec.kernel.nx != 1 && cfg.kernel_spec.kinds[0] == ConvKind::Valid {
            return Err(CfError::InvalidConfig(format!(
                "slice kernel must have kx extent 1, got {}",
                cfg.kernel_spec.kernel
            )));
        }
        let mut slice = hybrid_slice(&hybrid, x)?;
        // zero-filling is preserved by the kx transform only up to rounding
        for (v, &m) in slice.as_mut_slice().iter_mut().zip(slice_mask.as_slice()) {
            if !m {
                *v = Default::default();
            }
        }
        let sobs = ObservedData::new(slice, slice_mask.clone())?;
        results.push(cf_reconstruct(&sobs, &cfg)?);
    }
    Ok(results)
}

/// Stacks per-slice hybrid results and returns k-space with the observed
/// samples of `obs` re-imposed.
pub fn assemble_slices(obs: &ObservedData, slices: &[ReconResult]) -> Result<KTensor> {
    let shape = obs.shape();
    if slices.len() != shape.nx {
        return Err(CfError::LengthMismatch {
            expected: shape.nx,
            actual: slices.len(),
        });
    }
    let mut hybrid = KTensor::zeros(shape);
    for (x, r) in slices.iter().enumerate() {
        let s = &r.d_hat;
        for j in 0..s.len() {
            let mut i = s.shape().unravel(j);
            i[0] = x;
            hybrid.set(i, s.as_slice()[j]);
        }
    }
    let mut d = from_hybrid(&hybrid);
    for ((v, o), &m) in d
        .as_mut_slice()
        .iter_mut()
        .zip(obs.d_obs().as_slice())
        .zip(obs.mask().as_slice())
    {
        if m {
            *v = *o;
        }
    }
    Ok(d)
}
