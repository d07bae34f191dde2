//! Synthetic phantoms, sampling masks and tensor file I/O.

pub mod io;
pub mod mask;
pub mod phantom;

pub use io::{read_mask, read_tensor, write_mask, write_tensor, write_tensor_as, Dtype};
pub use mask::{generate_mask, MaskKind, MaskSpec};
pub use phantom::{
    coil_footprint, cross_coil_filter, generate_phantom, hidden_footprints, measured_rank, Phantom, PhantomSpec,
};
