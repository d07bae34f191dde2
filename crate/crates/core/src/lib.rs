//! Calibrationless k-space completion with convolutional annihilating filters.
//!
//! Recovers unobserved samples of a multi-coil k-space tensor by alternating
//! between estimating annihilating filters from the null space of an implicit
//! multi-level block Hankel operator and enforcing annihilation over the whole
//! tensor with a data-consistent least-squares solve. All Hankel products are
//! evaluated as small-kernel convolutions, so memory stays on the order of the
//! data itself.

pub mod alloc;
pub mod dataset;
pub mod error;
pub mod fft;
pub mod hankel;
pub mod metrics;
pub mod nullspace;
pub mod slicewise;
pub mod solver;
pub mod tensor;

pub use error::{CfError, Result};
pub use hankel::{explicit_hankel, gram_matrix, GramMatrix, HankelOperator};
pub use nullspace::{filters_from_nullspace, hermitian_eig, split_by_rank, EigenPair, FilterBank};
pub use solver::{
    cadzow_baseline, cf_reconstruct, cf_reconstruct_with_acs, gd_els_solve, AcsBox, ObservedData, ReconConfig,
    ReconResult,
};
pub use tensor::{nd_convolve, nd_convolve_adjoint, ConvKind, ConvSpec, KTensor, Mask, Shape5, C64};
