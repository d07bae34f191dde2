//! Five-dimensional complex k-space tensors and the per-dimension
//! valid / circular convolution primitives built on them.
//!
//! Dimensions are ordered `(kx, ky, kz, coil, t)` and every tensor is stored
//! column-major with `kx` fastest. The same linearization is used for kernel
//! vectorization everywhere in the crate, so `vec`/`unvec` are plain moves of
//! the backing buffer.
//!
//! Convolution of data `B` (extent `m` on some dim) with kernel `A` (extent
//! `n`) is defined per output position `p` as
//!
//! ```text
//! out[p] = sum_k A[k] * B[p + (n - 1) - k]
//! ```
//!
//! On a *valid* dim only the `m - n + 1` fully interior positions are kept.
//! On a *circular* dim all `m` positions are kept and the data index wraps
//! modulo `m`; the first `m - n + 1` circular outputs coincide with the valid
//! ones.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};

pub type C64 = Complex64;

pub const DIM_NAMES: [&str; 5] = ["kx", "ky", "kz", "coil", "t"];

/// Axis index of the coil dimension.
pub const COIL: usize = 3;
/// Axis index of the time dimension.
pub const TIME: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape5 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub nc: usize,
    pub nt: usize,
}

impl Shape5 {
    pub fn new(nx: usize, ny: usize, nz: usize, nc: usize, nt: usize) -> Result<Self> {
        Self::from_dims([nx, ny, nz, nc, nt])
    }

    pub fn from_dims(dims: [usize; 5]) -> Result<Self> {
        if let Some(d) = dims.iter().position(|&e| e == 0) {
            return Err(CfError::InvalidShape(format!(
                "extent of {} must be at least 1, got {dims:?}",
                DIM_NAMES[d]
            )));
        }
        Ok(Self {
            nx: dims[0],
            ny: dims[1],
            nz: dims[2],
            nc: dims[3],
            nt: dims[4],
        })
    }

    pub fn dims(&self) -> [usize; 5] {
        [self.nx, self.ny, self.nz, self.nc, self.nt]
    }

    /// Total element count.
    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: [usize; 5]) -> usize {
        i[0] + self.nx * (i[1] + self.ny * (i[2] + self.nz * (i[3] + self.nc * i[4])))
    }

    pub fn unravel(&self, mut idx: usize) -> [usize; 5] {
        let mut out = [0; 5];
        for (d, &n) in self.dims().iter().enumerate() {
            out[d] = idx % n;
            idx /= n;
        }
        out
    }

    pub fn with_dim(&self, dim: usize, extent: usize) -> Result<Self> {
        let mut d = self.dims();
        d[dim] = extent;
        Self::from_dims(d)
    }
}

impl std::fmt::Display for Shape5 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{},{})", self.nx, self.ny, self.nz, self.nc, self.nt)
    }
}

/// Complex k-space tensor over `(kx, ky, kz, coil, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KTensor {
    shape: Shape5,
    data: Vec<C64>,
}

impl KTensor {
    pub fn zeros(shape: Shape5) -> Self {
        Self {
            shape,
            data: vec![C64::new(0.0, 0.0); shape.len()],
        }
    }

    /// Builds a tensor from a column-major buffer (the `unvec` operation).
    pub fn from_vec(shape: Shape5, data: Vec<C64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(CfError::LengthMismatch {
                expected: shape.len(),
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: Shape5, mut f: impl FnMut([usize; 5]) -> C64) -> Self {
        let data = (0..shape.len()).map(|i| f(shape.unravel(i))).collect();
        Self { shape, data }
    }

    /// A kernel holding a single `1.0` at `at`.
    pub fn delta(shape: Shape5, at: [usize; 5]) -> Self {
        let mut t = Self::zeros(shape);
        t.data[shape.index(at)] = C64::new(1.0, 0.0);
        t
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    /// Column-major view of the samples (the `vec` operation).
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: [usize; 5]) -> C64 {
        self.data[self.shape.index(i)]
    }

    pub fn set(&mut self, i: [usize; 5], v: C64) {
        let idx = self.shape.index(i);
        self.data[idx] = v;
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Conjugate-linear inner product `sum conj(self) * other`.
    pub fn inner(&self, other: &KTensor) -> Result<C64> {
        self.expect_shape(other.shape)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &KTensor) -> Result<f64> {
        self.expect_shape(other.shape)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Flips every dimension: `out[i] = self[n - 1 - i]` per axis.
    pub fn flipped(&self) -> Self {
        let s = self.shape;
        let d = s.dims();
        Self::from_fn(s, |i| {
            self.get([
                d[0] - 1 - i[0],
                d[1] - 1 - i[1],
                d[2] - 1 - i[2],
                d[3] - 1 - i[3],
                d[4] - 1 - i[4],
            ])
        })
    }

    /// Copies the box `starts[d] .. starts[d] + shape[d]`.
    pub fn sub_tensor(&self, starts: [usize; 5], shape: Shape5) -> Result<Self> {
        let src = self.shape.dims();
        for (d, (&st, &n)) in starts.iter().zip(shape.dims().iter()).enumerate() {
            if st + n > src[d] {
                return Err(CfError::IndexOutOfRange(format!(
                    "box {}..{} exceeds {} extent {}",
                    st,
                    st + n,
                    DIM_NAMES[d],
                    src[d]
                )));
            }
        }
        Ok(Self::from_fn(shape, |i| {
            self.get([
                i[0] + starts[0],
                i[1] + starts[1],
                i[2] + starts[2],
                i[3] + starts[3],
                i[4] + starts[4],
            ])
        }))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn expect_shape(&self, shape: Shape5) -> Result<()> {
        if self.shape != shape {
            return Err(CfError::ShapeMismatch(format!(
                "expected {shape}, got {}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// Binary sampling mask over the same grid as a [`KTensor`]; `true` = observed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    shape: Shape5,
    data: Vec<bool>,
}

impl Mask {
    pub fn full(shape: Shape5) -> Self {
        Self {
            shape,
            data: vec![true; shape.len()],
        }
    }

    pub fn empty(shape: Shape5) -> Self {
        Self {
            shape,
            data: vec![false; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape5, data: Vec<bool>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(CfError::LengthMismatch {
                expected: shape.len(),
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: Shape5, mut f: impl FnMut([usize; 5]) -> bool) -> Self {
        let data = (0..shape.len()).map(|i| f(shape.unravel(i))).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, i: [usize; 5]) -> bool {
        self.data[self.shape.index(i)]
    }

    pub fn set(&mut self, i: [usize; 5], v: bool) {
        let idx = self.shape.index(i);
        self.data[idx] = v;
    }

    pub fn observed(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Observed fraction `|observed| / |total|`, i.e. `1 / R`.
    pub fn fraction(&self) -> f64 {
        self.observed() as f64 / self.data.len() as f64
    }

    /// Zero-fills `full` outside the mask.
    pub fn apply(&self, full: &KTensor) -> Result<KTensor> {
        full.expect_shape(self.shape)?;
        let data = full
            .data
            .iter()
            .zip(&self.data)
            .map(|(&z, &m)| if m { z } else { C64::new(0.0, 0.0) })
            .collect();
        Ok(KTensor { shape: self.shape, data })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvKind {
    Valid,
    Circular,
}

/// Kernel extents `s = [f_x, f_y, f_z, N_c, f_t]` plus the boundary rule on each dim.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: Shape5,
    pub kinds: [ConvKind; 5],
}

impl ConvSpec {
    pub fn new(kernel: Shape5, kinds: [ConvKind; 5]) -> Self {
        Self { kernel, kinds }
    }

    pub fn valid(kernel: Shape5) -> Self {
        Self::new(kernel, [ConvKind::Valid; 5])
    }

    pub fn circular(kernel: Shape5) -> Self {
        Self::new(kernel, [ConvKind::Circular; 5])
    }

    /// Valid on every dim except time, which is circular when `nt > 1`.
    pub fn for_data(kernel: Shape5, data: Shape5) -> Self {
        let mut kinds = [ConvKind::Valid; 5];
        if data.nt > 1 {
            kinds[TIME] = ConvKind::Circular;
        }
        Self::new(kernel, kinds)
    }

    pub fn with_kind(mut self, dim: usize, kind: ConvKind) -> Self {
        self.kinds[dim] = kind;
        self
    }

    /// Number of kernel taps, i.e. the Gram side `prod(s)`.
    pub fn taps(&self) -> usize {
        self.kernel.len()
    }

    /// Checks that every kernel extent fits inside the data.
    pub fn check_data(&self, data: Shape5) -> Result<()> {
        let k = self.kernel.dims();
        let m = data.dims();
        for d in 0..5 {
            if k[d] > m[d] {
                return Err(CfError::ShapeMismatch(format!(
                    "kernel extent {} exceeds data extent {} on {} ({:?} convolution)",
                    k[d], m[d], DIM_NAMES[d], self.kinds[d]
                )));
            }
        }
        Ok(())
    }

    /// Additional requirement of the reconstruction pipeline: kernels span every coil.
    pub fn check_spans_coils(&self, data: Shape5) -> Result<()> {
        self.check_data(data)?;
        if self.kernel.nc != data.nc {
            return Err(CfError::Dimensionality(format!(
                "kernel coil extent {} must equal the number of coils {}",
                self.kernel.nc, data.nc
            )));
        }
        if self.kinds[COIL] != ConvKind::Valid {
            return Err(CfError::Dimensionality(
                "coil dimension must use valid convolution".into(),
            ));
        }
        Ok(())
    }

    /// Output extents of `nd_convolve(data, kernel, self)`.
    pub fn output_shape(&self, data: Shape5) -> Result<Shape5> {
        self.check_data(data)?;
        let k = self.kernel.dims();
        let m = data.dims();
        let mut o = [0; 5];
        for d in 0..5 {
            o[d] = match self.kinds[d] {
                ConvKind::Valid => m[d] - k[d] + 1,
                ConvKind::Circular => m[d],
            };
        }
        Shape5::from_dims(o)
    }
}

/// Per-axis map from (kernel tap, output position) to source position.
pub(crate) struct AxisMap {
    taps: usize,
    out_len: usize,
    table: Vec<Option<usize>>,
}

impl AxisMap {
    /// Forward convolution: source index of data for output `p`, tap `k`.
    pub(crate) fn forward(kind: ConvKind, m: usize, n: usize, out_len: usize) -> Self {
        let mut table = Vec::with_capacity(n * out_len);
        for k in 0..n {
            for p in 0..out_len {
                let s = p + (n - 1) - k;
                table.push(match kind {
                    ConvKind::Valid => Some(s),
                    ConvKind::Circular => Some(s % m),
                });
            }
        }
        Self { taps: n, out_len, table }
    }

    /// Adjoint: for data position `q` and tap `k`, the convolution output
    /// position `p` that read `B[q]` through tap `k`, if any.
    fn adjoint(kind: ConvKind, m: usize, n: usize, y_len: usize) -> Self {
        let mut table = Vec::with_capacity(n * m);
        for k in 0..n {
            for q in 0..m {
                // q = p + (n - 1) - k  =>  p = q + k - (n - 1)
                let p = (q + k) as isize - (n as isize - 1);
                table.push(match kind {
                    ConvKind::Valid => (p >= 0 && (p as usize) < y_len).then_some(p as usize),
                    ConvKind::Circular => Some(p.rem_euclid(m as isize) as usize),
                });
            }
        }
        Self { taps: n, out_len: m, table }
    }

    #[inline]
    pub(crate) fn get(&self, k: usize, p: usize) -> Option<usize> {
        self.table[k * self.out_len + p]
    }

    /// Contiguous runs `(out_start, src_start, len)` for each tap.
    pub(crate) fn runs(&self) -> Vec<Vec<(usize, usize, usize)>> {
        (0..self.taps)
            .map(|k| {
                let mut runs: Vec<(usize, usize, usize)> = Vec::new();
                for p in 0..self.out_len {
                    if let Some(s) = self.get(k, p) {
                        match runs.last_mut() {
                            Some((o, s0, len)) if *o + *len == p && *s0 + *len == s => *len += 1,
                            _ => runs.push((p, s, 1)),
                        }
                    }
                }
                runs
            })
            .collect()
    }
}

/// Shared sliding-sum engine: `out[p] += sum_k coef(A[k]) * src[map(p, k)]`.
///
/// Each output element accumulates over taps in a fixed order, so results do
/// not depend on how rows are distributed across threads.
fn accumulate(
    src: &KTensor,
    kernel: &KTensor,
    maps: &[AxisMap; 5],
    out: &mut KTensor,
    conjugate: bool,
) {
    let src_shape = src.shape;
    let out_dims = out.shape.dims();
    let kd = kernel.shape.dims();
    let x_runs = maps[0].runs();
    let ox = out_dims[0];
    let src_data = &src.data;
    let kernel_data = &kernel.data;
    let kshape = kernel.shape;

    out.data
        .par_chunks_mut(ox)
        .with_min_len(16)
        .enumerate()
        .for_each(|(row, out_row)| {
            let py = row % out_dims[1];
            let r = row / out_dims[1];
            let pz = r % out_dims[2];
            let r = r / out_dims[2];
            let pc = r % out_dims[3];
            let pt = r / out_dims[3];
            for kt in 0..kd[4] {
                let Some(st) = maps[4].get(kt, pt) else { continue };
                for kc in 0..kd[3] {
                    let Some(sc) = maps[3].get(kc, pc) else { continue };
                    for kz in 0..kd[2] {
                        let Some(sz) = maps[2].get(kz, pz) else { continue };
                        for ky in 0..kd[1] {
                            let Some(sy) = maps[1].get(ky, py) else { continue };
                            let base = src_shape.index([0, sy, sz, sc, st]);
                            let kbase = kshape.index([0, ky, kz, kc, kt]);
                            for (kx, runs) in x_runs.iter().enumerate() {
                                let a = kernel_data[kbase + kx];
                                if a.re == 0.0 && a.im == 0.0 {
                                    continue;
                                }
                                let coef = if conjugate { a.conj() } else { a };
                                for &(o, s, len) in runs {
                                    let dst = &mut out_row[o..o + len];
                                    let srow = &src_data[base + s..base + s + len];
                                    for (d, &b) in dst.iter_mut().zip(srow) {
                                        *d += coef * b;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

fn check_kernel(kernel: &KTensor, spec: &ConvSpec) -> Result<()> {
    if kernel.shape != spec.kernel {
        return Err(CfError::Dimensionality(format!(
            "kernel has shape {} but the convolution spec declares {}",
            kernel.shape, spec.kernel
        )));
    }
    Ok(())
}

/// Multi-dimensional convolution `B ⊠ A` with per-dim valid/circular rules.
pub fn nd_convolve(data: &KTensor, kernel: &KTensor, spec: &ConvSpec) -> Result<KTensor> {
    let out_shape = spec.output_shape(data.shape)?;
    let mut out = KTensor::zeros(out_shape);
    nd_convolve_into(data, kernel, spec, &mut out)?;
    Ok(out)
}

/// Like [`nd_convolve`] but overwrites a preallocated output.
pub fn nd_convolve_into(
    data: &KTensor,
    kernel: &KTensor,
    spec: &ConvSpec,
    out: &mut KTensor,
) -> Result<()> {
    check_kernel(kernel, spec)?;
    let out_shape = spec.output_shape(data.shape)?;
    out.expect_shape(out_shape)?;
    out.data.fill(C64::new(0.0, 0.0));
    let m = data.shape.dims();
    let n = spec.kernel.dims();
    let o = out_shape.dims();
    let maps = std::array::from_fn(|d| AxisMap::forward(spec.kinds[d], m[d], n[d], o[d]));
    accumulate(data, kernel, &maps, out, false);
    Ok(())
}

/// Adjoint of `B ↦ nd_convolve(B, A, spec)`: a correlation with `conj(A)`
/// scattered back onto a tensor of shape `out_shape`.
pub fn nd_convolve_adjoint(
    y: &KTensor,
    kernel: &KTensor,
    spec: &ConvSpec,
    out_shape: Shape5,
) -> Result<KTensor> {
    let mut out = KTensor::zeros(out_shape);
    nd_convolve_adjoint_add(y, kernel, spec, &mut out)?;
    Ok(out)
}

/// Adds the adjoint convolution of `y` into `acc`.
pub fn nd_convolve_adjoint_add(
    y: &KTensor,
    kernel: &KTensor,
    spec: &ConvSpec,
    acc: &mut KTensor,
) -> Result<()> {
    check_kernel(kernel, spec)?;
    let expected_y = spec.output_shape(acc.shape)?;
    if y.shape != expected_y {
        return Err(CfError::ShapeMismatch(format!(
            "adjoint input has shape {} but convolution of {} yields {}",
            y.shape, acc.shape, expected_y
        )));
    }
    let m = acc.shape.dims();
    let n = spec.kernel.dims();
    let o = expected_y.dims();
    let maps = std::array::from_fn(|d| AxisMap::adjoint(spec.kinds[d], m[d], n[d], o[d]));
    accumulate(y, kernel, &maps, acc, true);
    Ok(())
}
