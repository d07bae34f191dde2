//! Centered, unitary DFTs along the spatial axes.
//!
//! "Centered" means the zero-frequency sample sits at index `n / 2`:
//! `fftshift ∘ DFT ∘ ifftshift`, scaled by `1/sqrt(n)` in both directions.

use rustfft::FftPlanner;

use crate::tensor::{KTensor, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Applies the centered unitary DFT along one axis of `t`, in place.
pub fn centered_dft_axis(t: &mut KTensor, axis: usize, dir: Direction) {
    let shape = t.shape();
    let dims = shape.dims();
    let n = dims[axis];
    if n == 1 {
        return;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    };
    let stride: usize = dims[..axis].iter().product();
    let outer: usize = dims[axis + 1..].iter().product();
    let scale = 1.0 / (n as f64).sqrt();
    let half = n / 2;
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let data = t.as_mut_slice();
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * stride * n + inner;
            // ifftshift: centered index i goes to (i - n/2) mod n
            for i in 0..n {
                buf[(i + n - half) % n] = data[base + i * stride];
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            // fftshift back
            for i in 0..n {
                data[base + i * stride] = buf[(i + n - half) % n] * scale;
            }
        }
    }
}

/// Unitary centered inverse DFT over kx, ky, kz for every (coil, t) slice.
pub fn centered_ifft_spatial(d: &KTensor) -> KTensor {
    let mut out = d.clone();
    for axis in 0..3 {
        centered_dft_axis(&mut out, axis, Direction::Inverse);
    }
    out
}

/// Unitary centered forward DFT over the three spatial axes.
pub fn centered_fft_spatial(d: &KTensor) -> KTensor {
    let mut out = d.clone();
    for axis in 0..3 {
        centered_dft_axis(&mut out, axis, Direction::Forward);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape5;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape5, seed: u64) -> KTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        KTensor::from_fn(shape, |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    /// Direct O(n^2) centered DFT along one axis.
    fn brute_dft_axis(t: &KTensor, axis: usize, sign: f64) -> KTensor {
        let shape = t.shape();
        let n = shape.dims()[axis];
        let c = (n / 2) as f64;
        KTensor::from_fn(shape, |i| {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                let mut src = i;
                src[axis] = j;
                let ang = sign * 2.0 * std::f64::consts::PI * (i[axis] as f64 - c) * (j as f64 - c)
                    / n as f64;
                acc += t.get(src) * C64::from_polar(1.0, ang);
            }
            acc / (n as f64).sqrt()
        })
    }

    #[test]
    fn centered_delta_gives_constant_image() {
        for dims in [[8, 6, 1], [5, 7, 3], [4, 4, 4]] {
            let s = Shape5::new(dims[0], dims[1], dims[2], 1, 1).unwrap();
            let d = KTensor::delta(s, [dims[0] / 2, dims[1] / 2, dims[2] / 2, 0, 0]);
            let img = centered_ifft_spatial(&d);
            let expect = 1.0 / ((dims[0] * dims[1] * dims[2]) as f64).sqrt();
            for z in img.as_slice() {
                assert!((z.re - expect).abs() < 1e-14 && z.im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn preserves_norm() {
        let d = random(Shape5::new(9, 8, 3, 2, 2).unwrap(), 1);
        let out = centered_ifft_spatial(&d);
        assert!((out.norm() - d.norm()).abs() / d.norm() <= 1e-10);
    }

    #[test]
    fn matches_brute_force_and_round_trips() {
        let d = random(Shape5::new(6, 5, 3, 2, 1).unwrap(), 2);
        let mut oracle = d.clone();
        for axis in 0..3 {
            oracle = brute_dft_axis(&oracle, axis, 1.0);
        }
        let fast = centered_ifft_spatial(&d);
        assert!(fast.distance(&oracle).unwrap() / d.norm() < 1e-12);

        let back = centered_fft_spatial(&fast);
        assert!(back.distance(&d).unwrap() / d.norm() < 1e-10);
    }
}
