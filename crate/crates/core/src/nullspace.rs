//! Eigendecomposition of the Gram matrix, rank split, and conversion of
//! null-space eigenvectors into annihilating kernels.

use nalgebra::{DMatrix, DMatrixView, SymmetricEigen};

use crate::error::{CfError, Result};
use crate::hankel::GramMatrix;
use crate::tensor::{ConvSpec, KTensor, C64};

/// Spectrum of `HᴴH`: squared singular values of `H`, ascending, with
/// orthonormal eigenvectors in matching column order.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl EigenPair {
    pub fn side(&self) -> usize {
        self.values.len()
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Number of eigenvalues strictly above `rel · max`.
    pub fn numerical_rank(&self, rel: f64) -> usize {
        let cut = rel * self.max_value();
        self.values.iter().filter(|&&v| v > cut).count()
    }
}

pub fn hermitian_eig(g: &GramMatrix) -> Result<EigenPair> {
    hermitian_eig_owned(g.clone())
}

/// Consuming variant: the Gram storage is reused by the factorization.
pub fn hermitian_eig_owned(g: GramMatrix) -> Result<EigenPair> {
    let m = g.into_matrix();
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(CfError::NonFinite);
    }
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenPair { values, vectors })
}

/// Splits eigenvectors into the signal part (the `rank` largest) and the
/// null-space part (the remaining `side - rank`, smallest first).
///
/// Ties at the boundary are broken by sorted position.
pub fn split_by_rank(e: &EigenPair, rank: usize) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let side = e.side();
    check_rank(rank, side)?;
    let null = side - rank;
    let v_perp = e.vectors.columns(0, null).into_owned();
    let v_par = e.vectors.columns(null, rank).into_owned();
    Ok((v_par, v_perp))
}

pub(crate) fn check_rank(rank: usize, taps: usize) -> Result<()> {
    if rank == 0 || rank >= taps {
        return Err(CfError::RankOutOfRange { rank, taps });
    }
    Ok(())
}

/// Annihilating kernels `F_1, F_2, …`, each shaped like the convolution kernel.
#[derive(Clone, Debug)]
pub struct FilterBank {
    spec: ConvSpec,
    filters: Vec<KTensor>,
}

impl FilterBank {
    pub fn new(spec: ConvSpec, filters: Vec<KTensor>) -> Result<Self> {
        if let Some(f) = filters.iter().find(|f| f.shape() != spec.kernel) {
            return Err(CfError::ShapeMismatch(format!(
                "filter of shape {} in a bank declared for {}",
                f.shape(),
                spec.kernel
            )));
        }
        Ok(Self { spec, filters })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn filters(&self) -> &[KTensor] {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Takes the `side - rank` smallest eigenvectors straight from `e`.
    pub fn from_eigen(e: &EigenPair, rank: usize, spec: &ConvSpec) -> Result<Self> {
        check_rank(rank, e.side())?;
        filters_from_columns(e.vectors.columns(0, e.side() - rank), spec)
    }
}

/// Reshapes each null-space column to the kernel extents.
///
/// Columns of `H` are indexed by kernel tap in convolution order (each Hankel
/// row is an index-reversed patch), so the reshaped column is already the
/// kernel that realizes `vec(D ⊠ F_i) = H · v_i`; no further reversal is
/// applied.
pub fn filters_from_nullspace(v_perp: &DMatrix<C64>, spec: &ConvSpec) -> Result<FilterBank> {
    filters_from_columns(v_perp.as_view(), spec)
}

fn filters_from_columns(cols: DMatrixView<'_, C64>, spec: &ConvSpec) -> Result<FilterBank> {
    if cols.nrows() != spec.taps() {
        return Err(CfError::LengthMismatch {
            expected: spec.taps(),
            actual: cols.nrows(),
        });
    }
    let filters = cols
        .column_iter()
        .map(|c| KTensor::from_vec(spec.kernel, c.iter().copied().collect()))
        .collect::<Result<Vec<_>>>()?;
    FilterBank::new(*spec, filters)
}
