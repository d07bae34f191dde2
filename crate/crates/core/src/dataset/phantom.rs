//! Multi-coil phantoms whose k-space obeys exact cross-coil annihilation.
//!
//! Each coil sensitivity is the inverse DFT of a small random k-space kernel,
//! so coil `l` of the k-space is the image spectrum circularly convolved with
//! that kernel. For any pair of coils `(l, m)` the filter with kernel `c_m` on
//! coil `l` and `-c_l` on coil `m` then annihilates the data exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};
use crate::fft::{centered_fft_spatial, centered_ifft_spatial};
use crate::hankel::gram_matrix;
use crate::nullspace::hermitian_eig_owned;
use crate::tensor::{ConvSpec, KTensor, Mask, Shape5, C64};

/// Relative eigenvalue threshold that defines the measured rank.
pub const RANK_THRESHOLD: f64 = 1e-8;

/// Default width of the soft ellipse edge, in normalized coordinates.
pub const DEFAULT_EDGE_WIDTH: f64 = 0.04;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub shape: Shape5,
    /// Per-spatial-dim extent of each coil's k-space support. Downstream
    /// kernels are expected to be strictly larger on every spatial dim.
    pub coil_support: [usize; 3],
    pub num_ellipses: usize,
    /// Logistic edge width of each ellipse; larger is smoother.
    pub edge_width: f64,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(shape: Shape5, coil_support: [usize; 3], seed: u64) -> Self {
        Self {
            shape,
            coil_support,
            num_ellipses: 6,
            edge_width: DEFAULT_EDGE_WIDTH,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub d_full: KTensor,
    /// Gram eigenvalues above `RANK_THRESHOLD · max` for the caller's kernel.
    pub true_rank: usize,
    /// Coil k-space kernels, each of shape `(c_x, c_y, c_z, 1, 1)`.
    pub coil_kernels: Vec<KTensor>,
}

struct Ellipse {
    center: [f64; 3],
    axes: [f64; 3],
    angle: f64,
    intensity: f64,
    modulation: f64,
    mod_phase: f64,
}

impl Ellipse {
    fn random(rng: &mut ChaCha8Rng, first: bool) -> Self {
        if first {
            return Self {
                center: [0.0; 3],
                axes: [0.72, 0.85, 0.8],
                angle: 0.0,
                intensity: 1.0,
                modulation: 0.0,
                mod_phase: 0.0,
            };
        }
        Self {
            center: std::array::from_fn(|_| rng.random_range(-0.4..0.4)),
            axes: std::array::from_fn(|_| rng.random_range(0.08..0.35)),
            angle: rng.random_range(0.0..std::f64::consts::PI),
            intensity: rng.random_range(-0.6..0.8),
            modulation: rng.random_range(0.1..0.4),
            mod_phase: rng.random_range(0.0..2.0 * std::f64::consts::PI),
        }
    }

    /// Soft indicator in `[0, 1]`.
    fn weight(&self, u: [f64; 3], edge: f64) -> f64 {
        let dx = u[0] - self.center[0];
        let dy = u[1] - self.center[1];
        let (s, c) = self.angle.sin_cos();
        let rx = c * dx + s * dy;
        let ry = -s * dx + c * dy;
        let rz = u[2] - self.center[2];
        let r = ((rx / self.axes[0]).powi(2) + (ry / self.axes[1]).powi(2) + (rz / self.axes[2]).powi(2)).sqrt();
        1.0 / (1.0 + ((r - 1.0) / edge).exp())
    }
}

fn normalized_coord(i: usize, n: usize) -> f64 {
    if n == 1 {
        0.0
    } else {
        (i as f64 - (n / 2) as f64) / (n as f64 / 2.0)
    }
}

/// Builds the phantom and measures its rank under `kernel`.
pub fn generate_phantom(spec: &PhantomSpec, kernel: &ConvSpec) -> Result<Phantom> {
    let shape = spec.shape;
    kernel.check_spans_coils(shape)?;
    let dims = shape.dims();
    for d in 0..3 {
        if spec.coil_support[d] == 0 || spec.coil_support[d] > dims[d] {
            return Err(CfError::InvalidShape(format!(
                "coil support {:?} does not fit in {shape}",
                spec.coil_support
            )));
        }
    }
    if !(spec.edge_width > 0.0) {
        return Err(CfError::InvalidConfig("edge_width must be positive".into()));
    }
    if spec.num_ellipses == 0 {
        return Err(CfError::InvalidConfig("phantom needs at least one ellipse".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ellipses: Vec<Ellipse> = (0..spec.num_ellipses)
        .map(|e| Ellipse::random(&mut rng, e == 0))
        .collect();
    let phase0 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
    let ramp: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.6..0.6));

    let img_shape = Shape5::new(shape.nx, shape.ny, shape.nz, 1, shape.nt)?;
    let image = KTensor::from_fn(img_shape, |i| {
        let u = [
            normalized_coord(i[0], shape.nx),
            normalized_coord(i[1], shape.ny),
            normalized_coord(i[2], shape.nz),
        ];
        let t_phase = 2.0 * std::f64::consts::PI * i[4] as f64 / shape.nt as f64;
        let mut v = 0.0;
        for (k, e) in ellipses.iter().enumerate() {
            let temporal = if shape.nt > 1 && k > 0 {
                1.0 + e.modulation * (t_phase + e.mod_phase).cos()
            } else {
                1.0
            };
            v += e.intensity * temporal * e.weight(u, spec.edge_width);
        }
        let ph = phase0 + ramp[0] * u[0] + ramp[1] * u[1] + ramp[2] * u[2];
        C64::from_polar(v, ph)
    });

    let support = Shape5::new(spec.coil_support[0], spec.coil_support[1], spec.coil_support[2], 1, 1)?;
    let coil_kernels: Vec<KTensor> = (0..shape.nc)
        .map(|_| {
            KTensor::from_fn(support, |_| {
                C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            })
        })
        .collect();

    let spatial = Shape5::new(shape.nx, shape.ny, shape.nz, 1, 1)?;
    let mut d_full = KTensor::zeros(shape);
    for (l, ck) in coil_kernels.iter().enumerate() {
        let mut padded = KTensor::zeros(spatial);
        for j in 0..support.len() {
            let c = support.unravel(j);
            let at = std::array::from_fn(|d| {
                if d < 3 {
                    dims[d] / 2 - spec.coil_support[d] / 2 + c[d]
                } else {
                    0
                }
            });
            padded.set(at, ck.as_slice()[j]);
        }
        let sens = centered_ifft_spatial(&padded);
        for t in 0..shape.nt {
            let frame = KTensor::from_fn(spatial, |i| {
                image.get([i[0], i[1], i[2], 0, t]) * sens.get([i[0], i[1], i[2], 0, 0])
            });
            let k = centered_fft_spatial(&frame);
            for j in 0..spatial.len() {
                let i = spatial.unravel(j);
                d_full.set([i[0], i[1], i[2], l, t], k.as_slice()[j]);
            }
        }
    }
    // unit Frobenius norm keeps fixtures and thresholds comparable across shapes
    let n = d_full.norm();
    d_full.scale(1.0 / n);

    let true_rank = measured_rank(&d_full, kernel)?;
    Ok(Phantom {
        d_full,
        true_rank,
        coil_kernels,
    })
}

/// Count of Gram eigenvalues above `RANK_THRESHOLD · max`.
pub fn measured_rank(d: &KTensor, kernel: &ConvSpec) -> Result<usize> {
    let eig = hermitian_eig_owned(gram_matrix(d, kernel)?)?;
    Ok(eig.numerical_rank(RANK_THRESHOLD))
}

/// The cross-coil annihilator for coils `(l, m)`: `c_m` acting on coil `l`,
/// `-c_l` acting on coil `m`, embedded at the origin of a kernel of shape
/// `kernel`. The coil axis spans the data, so kernel slot `j` multiplies data
/// coil `nc - 1 - j`.
pub fn cross_coil_filter(phantom: &Phantom, l: usize, m: usize, kernel: Shape5) -> Result<KTensor> {
    let cl = &phantom.coil_kernels[l];
    let cm = &phantom.coil_kernels[m];
    let s = cl.shape();
    if s.nx > kernel.nx || s.ny > kernel.ny || s.nz > kernel.nz {
        return Err(CfError::ShapeMismatch(format!(
            "coil support {s} exceeds kernel {kernel}"
        )));
    }
    let nc = kernel.nc;
    let mut f = KTensor::zeros(kernel);
    for j in 0..s.len() {
        let i = s.unravel(j);
        f.set([i[0], i[1], i[2], nc - 1 - l, 0], cm.as_slice()[j]);
        f.set([i[0], i[1], i[2], nc - 1 - m, 0], -cl.as_slice()[j]);
    }
    Ok(f)
}

/// The data of a point image at `at`: coil `l` holds `c_l` starting at
/// spatial index `at`. It obeys every cross-coil annihilation relation, so
/// adding it to the phantom changes only the samples it covers.
pub fn coil_footprint(phantom: &Phantom, at: [usize; 3]) -> Result<KTensor> {
    let shape = phantom.d_full.shape();
    let dims = shape.dims();
    let c = phantom.coil_kernels[0].shape();
    let cd = c.dims();
    if (0..3).any(|d| at[d] + cd[d] > dims[d]) {
        return Err(CfError::IndexOutOfRange(format!("footprint at {at:?} of {c} leaves {shape}")));
    }
    let mut x = KTensor::zeros(shape);
    for (l, ck) in phantom.coil_kernels.iter().enumerate() {
        for j in 0..c.len() {
            let q = c.unravel(j);
            for t in 0..shape.nt {
                x.set([at[0] + q[0], at[1] + q[1], at[2] + q[2], l, t], ck.as_slice()[j]);
            }
        }
    }
    Ok(x)
}

/// Footprint origins whose whole `support` block is unobserved in frame `t`.
/// Data there cannot be inferred from the samples under the annihilation
/// model, whatever the reconstruction method.
pub fn hidden_footprints(mask: &Mask, support: [usize; 3], t: usize) -> Vec<[usize; 3]> {
    let dims = mask.shape().dims();
    let mut out = Vec::new();
    for z in 0..=dims[2].saturating_sub(support[2]) {
        for y in 0..=dims[1].saturating_sub(support[1]) {
            for x in 0..=dims[0].saturating_sub(support[0]) {
                let hidden = (0..support[2]).all(|dz| {
                    (0..support[1]).all(|dy| (0..support[0]).all(|dx| !mask.get([x + dx, y + dy, z + dz, 0, t])))
                });
                if hidden {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}
