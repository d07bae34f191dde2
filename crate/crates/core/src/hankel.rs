//! Matrix-free multi-level block Hankel operator.
//!
//! `H{D}` is the matrix whose product with `vec(A)` is `vec(D ⊠ A)`. Row `p`
//! corresponds to convolution output position `p` (column-major over the
//! output shape) and column `k` to kernel tap `k`, so
//! `H[p, k] = D[p + (n - 1) - k]` per dimension: each row is a sliding patch
//! of `D` with its indices reversed. Nothing here materializes `H` except
//! [`explicit_hankel`], which exists for tests and the alternating-projection
//! baseline.

use nalgebra::DMatrix;

use crate::error::{CfError, Result};
use crate::tensor::{nd_convolve, AxisMap, ConvSpec, KTensor, Shape5, C64};

/// Default cap on explicit Hankel entries.
pub const EXPLICIT_CAP: usize = 10_000_000;

#[derive(Clone, Copy, Debug)]
pub struct HankelOperator<'a> {
    data: &'a KTensor,
    spec: ConvSpec,
    out_shape: Shape5,
}

impl<'a> HankelOperator<'a> {
    pub fn new(data: &'a KTensor, spec: ConvSpec) -> Result<Self> {
        let out_shape = spec.output_shape(data.shape())?;
        Ok(Self { data, spec, out_shape })
    }

    pub fn data(&self) -> &KTensor {
        self.data
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    /// Shape of `D ⊠ A`; rows of `H` follow its linearization.
    pub fn output_shape(&self) -> Shape5 {
        self.out_shape
    }

    pub fn rows(&self) -> usize {
        self.out_shape.len()
    }

    pub fn cols(&self) -> usize {
        self.spec.taps()
    }

    /// `H · a`, evaluated as a convolution.
    pub fn matvec(&self, a: &[C64]) -> Result<Vec<C64>> {
        let kernel = KTensor::from_vec(self.spec.kernel, a.to_vec())?;
        Ok(nd_convolve(self.data, &kernel, &self.spec)?.into_vec())
    }

    /// `Hᴴ · y`: correlates `y` against every shifted copy of `conj(D)`.
    pub fn rmatvec(&self, y: &[C64]) -> Result<Vec<C64>> {
        if y.len() != self.rows() {
            return Err(CfError::LengthMismatch {
                expected: self.rows(),
                actual: y.len(),
            });
        }
        let plan = PatchPlan::new(self);
        Ok((0..self.cols()).map(|k| plan.shifted_dot(y, k).conj()).collect())
    }
}

/// Index machinery shared by the Gram, adjoint and explicit constructions.
struct PatchPlan<'a> {
    data: &'a KTensor,
    kernel: Shape5,
    out: Shape5,
    maps: [AxisMap; 5],
    x_runs: Vec<Vec<(usize, usize, usize)>>,
}

impl<'a> PatchPlan<'a> {
    fn new(op: &HankelOperator<'a>) -> Self {
        let m = op.data.shape().dims();
        let n = op.spec.kernel.dims();
        let o = op.out_shape.dims();
        let maps: [AxisMap; 5] =
            std::array::from_fn(|d| AxisMap::forward(op.spec.kinds[d], m[d], n[d], o[d]));
        let x_runs = maps[0].runs();
        Self {
            data: op.data,
            kernel: op.spec.kernel,
            out: op.out_shape,
            maps,
            x_runs,
        }
    }

    /// Calls `f(out_offset, src_offset, len)` for every contiguous run of
    /// column `k` of `H`.
    #[inline]
    fn for_each_run(&self, k: usize, mut f: impl FnMut(usize, usize, usize)) {
        let [kx, ky, kz, kc, kt] = self.kernel.unravel(k);
        let o = self.out.dims();
        let dshape = self.data.shape();
        let mut row = 0;
        for pt in 0..o[4] {
            let st = self.maps[4].get(kt, pt);
            for pc in 0..o[3] {
                let sc = self.maps[3].get(kc, pc);
                for pz in 0..o[2] {
                    let sz = self.maps[2].get(kz, pz);
                    for py in 0..o[1] {
                        let sy = self.maps[1].get(ky, py);
                        // forward maps are total
                        let base = dshape.index([0, sy.unwrap(), sz.unwrap(), sc.unwrap(), st.unwrap()]);
                        for &(ox, sx, len) in &self.x_runs[kx] {
                            f(row * o[0] + ox, base + sx, len);
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    /// `sum_p conj(w[p]) * H[p, k]`.
    fn shifted_dot(&self, w: &[C64], k: usize) -> C64 {
        let d = self.data.as_slice();
        let mut acc = C64::new(0.0, 0.0);
        self.for_each_run(k, |o, s, len| {
            for (a, b) in w[o..o + len].iter().zip(&d[s..s + len]) {
                acc += a.conj() * b;
            }
        });
        acc
    }

    /// Column `k` of `H` written into `col`.
    fn column(&self, k: usize, col: &mut [C64]) {
        let d = self.data.as_slice();
        self.for_each_run(k, |o, s, len| col[o..o + len].copy_from_slice(&d[s..s + len]));
    }
}

/// Dense Hermitian `HᴴH`, side `prod(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<C64>,
}

impl GramMatrix {
    pub fn from_matrix(entries: DMatrix<C64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(CfError::ShapeMismatch(format!(
                "Gram matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self { entries })
    }

    pub fn side(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.entries
    }

    /// `|G - Gᴴ|_F / |G|_F`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.entries.norm();
        if n == 0.0 {
            return 0.0;
        }
        (&self.entries - self.entries.adjoint()).norm() / n
    }

    /// Replaces `G` by `(G + Gᴴ) / 2`.
    pub fn symmetrize(&mut self) {
        let adj = self.entries.adjoint();
        self.entries += adj;
        self.entries.scale_mut(0.5);
    }
}

/// Assembles `H{D}ᴴ H{D}` by shifted inner products without forming `H`.
///
/// Work is `O(prod(s)^2 · rows)`; extra memory is one Hankel column.
pub fn gram_matrix(data: &KTensor, spec: &ConvSpec) -> Result<GramMatrix> {
    let op = HankelOperator::new(data, *spec)?;
    let plan = PatchPlan::new(&op);
    let taps = op.cols();
    let mut g = DMatrix::<C64>::zeros(taps, taps);
    let mut col = vec![C64::new(0.0, 0.0); op.rows()];
    for j in 0..taps {
        plan.column(j, &mut col);
        g[(j, j)] = C64::new(col.iter().map(|z| z.norm_sqr()).sum(), 0.0);
        for k in j + 1..taps {
            let v = plan.shifted_dot(&col, k);
            g[(j, k)] = v;
            g[(k, j)] = v.conj();
        }
    }
    GramMatrix::from_matrix(g)
}

/// Materializes `H` (tests and small baselines only).
pub fn explicit_hankel(op: &HankelOperator<'_>) -> Result<DMatrix<C64>> {
    explicit_hankel_capped(op, EXPLICIT_CAP)
}

pub fn explicit_hankel_capped(op: &HankelOperator<'_>, cap: usize) -> Result<DMatrix<C64>> {
    let entries = op.rows().saturating_mul(op.cols());
    if entries > cap {
        return Err(CfError::ExplicitCapExceeded { entries, cap });
    }
    let plan = PatchPlan::new(op);
    let rows = op.rows();
    let mut h = DMatrix::<C64>::zeros(rows, op.cols());
    // nalgebra storage is column-major, so column k is one contiguous slice
    for (k, col) in h.as_mut_slice().chunks_mut(rows).enumerate() {
        plan.column(k, col);
    }
    Ok(h)
}

/// Projects a dense `rows x cols` matrix onto Hankel structure: every data
/// sample becomes the mean of the matrix entries that `H` would copy it into.
pub fn average_onto_hankel(m: &DMatrix<C64>, op: &HankelOperator<'_>) -> Result<KTensor> {
    if m.nrows() != op.rows() || m.ncols() != op.cols() {
        return Err(CfError::ShapeMismatch(format!(
            "matrix is {}x{}, Hankel structure is {}x{}",
            m.nrows(),
            m.ncols(),
            op.rows(),
            op.cols()
        )));
    }
    let plan = PatchPlan::new(op);
    let shape = op.data.shape();
    let mut sum = vec![C64::new(0.0, 0.0); shape.len()];
    let mut count = vec![0u32; shape.len()];
    let rows = op.rows();
    for (k, col) in m.as_slice().chunks(rows).enumerate() {
        plan.for_each_run(k, |o, s, len| {
            for i in 0..len {
                sum[s + i] += col[o + i];
                count[s + i] += 1;
            }
        });
    }
    for (v, &c) in sum.iter_mut().zip(&count) {
        if c > 0 {
            *v /= c as f64;
        }
    }
    KTensor::from_vec(shape, sum)
}

/// Bytes of a `c128` tensor of shape `shape`.
pub fn tensor_bytes(shape: Shape5) -> u128 {
    shape.len() as u128 * std::mem::size_of::<C64>() as u128
}

/// Bytes the explicit Hankel matrix of `shape` data under `spec` would need,
/// computed without building anything.
pub fn explicit_hankel_bytes(shape: Shape5, spec: &ConvSpec) -> Result<u128> {
    let rows = spec.output_shape(shape)?.len() as u128;
    Ok(rows * spec.taps() as u128 * std::mem::size_of::<C64>() as u128)
}
