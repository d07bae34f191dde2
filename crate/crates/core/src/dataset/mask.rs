//! Undersampling patterns.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`. Random sets are
//! drawn with an exact sample count rather than per-sample coin flips, so the
//! achieved acceleration is the requested one up to rounding.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};
use crate::tensor::{Mask, Shape5};

/// Accepted relative deviation of the observed fraction from `1 / R`.
pub const FRACTION_TOLERANCE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// Random points on the phase-encode plane: `(ky, kz)` for 3-D data,
    /// `(kx, ky)` for 2-D data.
    Uniform2d,
    /// `Uniform2d` plus a fully sampled central box.
    Uniform2dAcs,
    /// Random full readout lines (all `kx`, all `kz`) at chosen `ky`, plus
    /// central ACS lines.
    Lines1dAcs,
    /// Per-frame `ky` lines drawn with Gaussian density around the centre,
    /// plus a fully sampled central band in every frame.
    VardensT,
}

impl std::str::FromStr for MaskKind {
    type Err = CfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform2d" => Ok(Self::Uniform2d),
            "uniform2d_acs" => Ok(Self::Uniform2dAcs),
            "lines1d_acs" => Ok(Self::Lines1dAcs),
            "vardens_t" => Ok(Self::VardensT),
            other => Err(CfError::InvalidConfig(format!(
                "unknown mask pattern '{other}' (expected uniform2d, uniform2d_acs, lines1d_acs or vardens_t)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub accel: f64,
    /// Central fully sampled extents on `(kx, ky, kz)`; only the dims of the
    /// pattern's sampling plane are used.
    pub acs_extent: [usize; 3],
    pub seed: u64,
    /// Standard deviation of the variable-density law as a fraction of `ny`.
    pub density_sigma: f64,
}

impl MaskSpec {
    pub fn new(kind: MaskKind, accel: f64, acs_extent: [usize; 3], seed: u64) -> Self {
        Self {
            kind,
            accel,
            acs_extent,
            seed,
            density_sigma: 0.2,
        }
    }
}

fn centered_range(n: usize, e: usize) -> (usize, usize) {
    let start = (n / 2 - e / 2).min(n - e);
    (start, start + e)
}

/// Plane dims sampled by the 2-D patterns.
fn plane_dims(shape: Shape5) -> [usize; 2] {
    if shape.nz > 1 {
        [1, 2]
    } else {
        [0, 1]
    }
}

fn target_count(total: usize, accel: f64) -> usize {
    ((total as f64) / accel).round() as usize
}

/// Picks `count` of the `candidates` uniformly without replacement.
fn pick_uniform(rng: &mut ChaCha8Rng, candidates: &[usize], count: usize) -> Vec<usize> {
    sample(rng, candidates.len(), count)
        .into_iter()
        .map(|i| candidates[i])
        .collect()
}

/// Weighted sampling without replacement (Efraimidis–Spirakis keys).
fn pick_weighted(rng: &mut ChaCha8Rng, candidates: &[usize], weights: &[f64], count: usize) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = candidates
        .iter()
        .zip(weights)
        .map(|(&c, &w)| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (u.ln() / w, c)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(count).map(|(_, c)| c).collect()
}

fn too_many_acs(acs: usize, target: usize) -> CfError {
    CfError::InvalidConfig(format!(
        "ACS region holds {acs} samples but the acceleration allows only {target}"
    ))
}

pub fn generate_mask(spec: &MaskSpec, shape: Shape5) -> Result<Mask> {
    if !(spec.accel > 1.0) {
        return Err(CfError::InvalidConfig(format!(
            "acceleration R must exceed 1, got {}",
            spec.accel
        )));
    }
    let dims = shape.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mask = match spec.kind {
        MaskKind::Uniform2d | MaskKind::Uniform2dAcs => {
            let [a, b] = plane_dims(shape);
            let (na, nb) = (dims[a], dims[b]);
            let (acs_a, acs_b) = if spec.kind == MaskKind::Uniform2dAcs {
                let (ea, eb) = (spec.acs_extent[a], spec.acs_extent[b]);
                if ea > na || eb > nb || ea == 0 || eb == 0 {
                    return Err(CfError::Acs(format!(
                        "ACS extent {:?} does not fit in {shape}",
                        spec.acs_extent
                    )));
                }
                (centered_range(na, ea), centered_range(nb, eb))
            } else {
                ((0, 0), (0, 0))
            };
            let in_acs = |i: usize, j: usize| i >= acs_a.0 && i < acs_a.1 && j >= acs_b.0 && j < acs_b.1;
            let total = na * nb;
            let target = target_count(total, spec.accel);
            let mut plane = vec![false; total];
            let mut free = Vec::new();
            for j in 0..nb {
                for i in 0..na {
                    if in_acs(i, j) {
                        plane[i + na * j] = true;
                    } else {
                        free.push(i + na * j);
                    }
                }
            }
            let acs = total - free.len();
            if acs > target {
                return Err(too_many_acs(acs, target));
            }
            for p in pick_uniform(&mut rng, &free, target - acs) {
                plane[p] = true;
            }
            Mask::from_fn(shape, |i| plane[i[a] + na * i[b]])
        }
        MaskKind::Lines1dAcs => {
            let ny = shape.ny;
            let e = spec.acs_extent[1];
            if e > ny {
                return Err(CfError::Acs(format!("{e} ACS lines do not fit in ny = {ny}")));
            }
            let (lo, hi) = centered_range(ny, e);
            let target = target_count(ny, spec.accel);
            if e > target {
                return Err(too_many_acs(e, target));
            }
            let free: Vec<usize> = (0..ny).filter(|&y| y < lo || y >= hi).collect();
            let mut lines = vec![false; ny];
            (lo..hi).for_each(|y| lines[y] = true);
            for y in pick_uniform(&mut rng, &free, target - e) {
                lines[y] = true;
            }
            Mask::from_fn(shape, |i| lines[i[1]])
        }
        MaskKind::VardensT => {
            let ny = shape.ny;
            let e = spec.acs_extent[1];
            if e > ny {
                return Err(CfError::Acs(format!("{e} center lines do not fit in ny = {ny}")));
            }
            if !(spec.density_sigma > 0.0) {
                return Err(CfError::InvalidConfig("density_sigma must be positive".into()));
            }
            let (lo, hi) = centered_range(ny, e);
            let target = target_count(ny, spec.accel);
            if e > target {
                return Err(too_many_acs(e, target));
            }
            let free: Vec<usize> = (0..ny).filter(|&y| y < lo || y >= hi).collect();
            let sigma = spec.density_sigma * ny as f64;
            let c = (ny / 2) as f64;
            let weights: Vec<f64> = free
                .iter()
                .map(|&y| (-(y as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp().max(1e-12))
                .collect();
            let mut lines = vec![false; ny * shape.nt];
            for t in 0..shape.nt {
                (lo..hi).for_each(|y| lines[y + ny * t] = true);
                for y in pick_weighted(&mut rng, &free, &weights, target - e) {
                    lines[y + ny * t] = true;
                }
            }
            Mask::from_fn(shape, |i| lines[i[1] + ny * i[4]])
        }
    };
    let frac = mask.fraction();
    let want = 1.0 / spec.accel;
    if (frac - want).abs() > FRACTION_TOLERANCE * want {
        return Err(CfError::InvalidConfig(format!(
            "grid too small to realise R = {}: observed fraction {frac:.4} vs {want:.4}",
            spec.accel
        )));
    }
    Ok(mask)
}
