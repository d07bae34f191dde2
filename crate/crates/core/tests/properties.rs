use cfrecon_core::hankel::explicit_hankel;
use cfrecon_core::nullspace::hermitian_eig;
use cfrecon_core::tensor::nd_convolve_adjoint;
use cfrecon_core::{gram_matrix, nd_convolve, ConvKind, ConvSpec, HankelOperator, KTensor, Shape5, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A data shape, a kernel that fits it, per-dim convolution kinds and a seed.
#[derive(Debug, Clone)]
struct Case {
    data: [usize; 5],
    kernel: [usize; 5],
    kinds: [ConvKind; 5],
    seed: u64,
}

fn case(max_extent: usize) -> impl Strategy<Value = Case> {
    (
        prop::array::uniform5((1..=max_extent, 1..=max_extent)),
        prop::array::uniform5(any::<bool>()),
        any::<u64>(),
    )
        .prop_map(|(pairs, circ, seed)| {
            let data = pairs.map(|(a, _)| a);
            let mut kernel = [0; 5];
            for d in 0..5 {
                kernel[d] = 1 + (pairs[d].1 - 1) % data[d];
            }
            let kinds = circ.map(|c| if c { ConvKind::Circular } else { ConvKind::Valid });
            Case {
                data,
                kernel,
                kinds,
                seed,
            }
        })
}

fn random(shape: Shape5, rng: &mut ChaCha8Rng) -> KTensor {
    KTensor::from_fn(shape, |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn build(c: &Case) -> (KTensor, KTensor, ConvSpec, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let ds = Shape5::from_dims(c.data).unwrap();
    let ks = Shape5::from_dims(c.kernel).unwrap();
    let d = random(ds, &mut rng);
    let k = random(ks, &mut rng);
    (d, k, ConvSpec::new(ks, c.kinds), rng)
}

/// out[p] = sum_k A[k] B[src(p, k)], written directly from the definition.
fn brute_force(d: &KTensor, k: &KTensor, spec: &ConvSpec) -> KTensor {
    let ds = d.shape().dims();
    let ks = k.shape().dims();
    let os = spec.output_shape(d.shape()).unwrap();
    KTensor::from_fn(os, |p| {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..k.len() {
            let kk = k.shape().unravel(j);
            let mut src = [0usize; 5];
            for a in 0..5 {
                let raw = p[a] as i64 + ks[a] as i64 - 1 - kk[a] as i64;
                src[a] = raw.rem_euclid(ds[a] as i64) as usize;
            }
            acc += k.as_slice()[j] * d.get(src);
        }
        acc
    })
}

fn rel(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn to_matrix(v: &[C64]) -> DMatrix<C64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(160))]

    #[test]
    fn adjoint_identity(c in case(6)) {
        let (d, k, spec, mut rng) = build(&c);
        let y = random(spec.output_shape(d.shape()).unwrap(), &mut rng);
        let lhs = nd_convolve(&d, &k, &spec).unwrap().inner(&y).unwrap();
        let rhs = d.inner(&nd_convolve_adjoint(&y, &k, &spec, d.shape()).unwrap()).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()), "{lhs} vs {rhs}");
    }

    #[test]
    fn convolution_matches_definition(c in case(6)) {
        let (d, k, spec, _) = build(&c);
        let fast = nd_convolve(&d, &k, &spec).unwrap();
        let slow = brute_force(&d, &k, &spec);
        prop_assert_eq!(fast.shape(), slow.shape());
        prop_assert!(rel(fast.as_slice(), slow.as_slice()) <= 1e-13);
    }

    #[test]
    fn vec_unvec_round_trip(c in case(5)) {
        let (d, _, _, _) = build(&c);
        let back = KTensor::from_vec(d.shape(), d.clone().into_vec()).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn hankel_matvec_is_convolution(c in case(6)) {
        let (d, k, spec, _) = build(&c);
        let op = HankelOperator::new(&d, spec).unwrap();
        let hv = op.matvec(k.as_slice()).unwrap();
        let conv = nd_convolve(&d, &k, &spec).unwrap();
        prop_assert!(rel(&hv, conv.as_slice()) <= 1e-12);
        let h = explicit_hankel(&op).unwrap();
        let dense = &h * to_matrix(k.as_slice());
        prop_assert!(rel(dense.as_slice(), conv.as_slice()) <= 1e-12);
    }

    #[test]
    fn gram_matches_explicit_product(c in case(5)) {
        let (d, _, spec, _) = build(&c);
        let g = gram_matrix(&d, &spec).unwrap();
        let h = explicit_hankel(&HankelOperator::new(&d, spec).unwrap()).unwrap();
        let e = h.adjoint() * &h;
        prop_assert!((g.matrix() - &e).norm() <= 1e-12 * e.norm().max(1e-300));
        prop_assert_eq!(g.hermitian_defect(), 0.0);
        let eig = hermitian_eig(&g).unwrap();
        prop_assert!(eig.values[0] >= -1e-12 * eig.max_value().max(1.0));
    }
}

#[test]
fn eigenvalues_are_squared_singular_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let s = Shape5::new(9, 8, 1, 3, 1).unwrap();
    let d = random(s, &mut rng);
    let spec = ConvSpec::valid(Shape5::new(3, 3, 1, 3, 1).unwrap());
    let eig = hermitian_eig(&gram_matrix(&d, &spec).unwrap()).unwrap();
    let h = explicit_hankel(&HankelOperator::new(&d, spec).unwrap()).unwrap();
    let mut sv2: Vec<f64> = h.singular_values().iter().map(|v| v * v).collect();
    sv2.sort_by(f64::total_cmp);
    for (a, b) in eig.values.iter().zip(&sv2) {
        assert!((a - b).abs() <= 1e-10 * sv2[sv2.len() - 1], "{a} vs {b}");
    }
}

#[test]
fn eigenvector_filters_satisfy_parseval() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = Shape5::new(10, 7, 1, 2, 3).unwrap();
    let d = random(s, &mut rng);
    let spec = ConvSpec::for_data(Shape5::new(3, 2, 1, 2, 2).unwrap(), s);
    let eig = hermitian_eig(&gram_matrix(&d, &spec).unwrap()).unwrap();
    let bank = cfrecon_core::nullspace::FilterBank::from_eigen(&eig, 1, &spec).unwrap();
    for (i, f) in bank.filters().iter().enumerate() {
        let e = nd_convolve(&d, f, &spec).unwrap().norm_sqr();
        assert!((e - eig.values[i]).abs() <= 1e-10 * eig.max_value(), "{e} vs {}", eig.values[i]);
    }
}
