//! Golden files and cross-implementation checks.
//!
//! `regenerate_fixtures` (ignored) rewrites the Rust-produced artifacts;
//! `fixtures/make_oracles.py` then reads them with numpy, writes the
//! independently computed values to `oracles.json`, and writes `py_*.cfk`
//! tensors from its own encoder.

use std::path::PathBuf;

use cfrecon_core::dataset::{
    generate_mask, generate_phantom, read_mask, read_tensor, write_mask, write_tensor, MaskKind, MaskSpec,
    PhantomSpec,
};
use cfrecon_core::metrics::{error_map_pgm, kspace_snr_db, ssos_image};
use cfrecon_core::{ConvSpec, KTensor, Mask, Shape5, C64};
use serde_json::Value;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn phantom32() -> KTensor {
    let shape = Shape5::new(32, 32, 1, 4, 1).unwrap();
    let kernel = ConvSpec::for_data(Shape5::new(5, 5, 1, 4, 1).unwrap(), shape);
    generate_phantom(&PhantomSpec::new(shape, [2, 2, 1], 7), &kernel).unwrap().d_full
}

fn mask32_r4() -> Mask {
    let spec = MaskSpec::new(MaskKind::Uniform2dAcs, 4.0, [7, 7, 1], 7);
    generate_mask(&spec, Shape5::new(32, 32, 1, 4, 1).unwrap()).unwrap()
}

fn mask64_r4() -> Mask {
    let spec = MaskSpec::new(MaskKind::Uniform2dAcs, 4.0, [7, 7, 1], 2024);
    generate_mask(&spec, Shape5::new(64, 64, 1, 4, 1).unwrap()).unwrap()
}

fn oracles() -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir().join("oracles.json")).unwrap()).unwrap()
}

#[test]
#[ignore = "rewrites committed fixtures"]
fn regenerate_fixtures() {
    let d = dir();
    let full = phantom32();
    let zf = mask32_r4().apply(&full).unwrap();
    write_tensor(d.join("phantom32.cfk"), &full).unwrap();
    write_tensor(d.join("zerofill32_r4.cfk"), &zf).unwrap();
    write_mask(d.join("mask64_r4.cfk"), &mask64_r4()).unwrap();
    let r = ssos_image(&full, 0).unwrap();
    let x = ssos_image(&zf, 0).unwrap();
    error_map_pgm(&r, &x, 10.0, d.join("errmap32_r4_x10.pgm")).unwrap();
}

#[test]
fn phantom_and_mask_generation_match_committed_files() {
    assert_eq!(read_tensor(dir().join("phantom32.cfk")).unwrap(), phantom32());
    assert_eq!(read_mask(dir().join("mask64_r4.cfk")).unwrap(), mask64_r4());
}

#[test]
fn golden_mask_fraction_and_acs() {
    let m = read_mask(dir().join("mask64_r4.cfk")).unwrap();
    let f = m.fraction();
    assert!((0.225..=0.275).contains(&f), "{f}");
    assert_eq!(oracles()["mask64_r4_observed"].as_u64().unwrap() as usize, m.observed());
    // 7 x 7 centred box: indices 29..36 on both dims
    for x in 29..36 {
        for y in 29..36 {
            for c in 0..4 {
                assert!(m.get([x, y, 0, c, 0]));
            }
        }
    }
}

#[test]
fn zero_filled_snr_matches_independent_recomputation() {
    let full = read_tensor(dir().join("phantom32.cfk")).unwrap();
    let zf = read_tensor(dir().join("zerofill32_r4.cfk")).unwrap();
    let snr = kspace_snr_db(&full, &zf).unwrap();
    let oracle = oracles()["zerofill32_r4_snr_db"].as_f64().unwrap();
    assert!((snr - oracle).abs() <= 1e-10, "{snr} vs {oracle}");
}

#[test]
fn golden_error_map_is_byte_identical() {
    let full = read_tensor(dir().join("phantom32.cfk")).unwrap();
    let zf = read_tensor(dir().join("zerofill32_r4.cfk")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e.pgm");
    error_map_pgm(&ssos_image(&full, 0).unwrap(), &ssos_image(&zf, 0).unwrap(), 10.0, &out).unwrap();
    let golden = std::fs::read(dir().join("errmap32_r4_x10.pgm")).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), golden);
    // numpy recomputation of the pixels agrees up to rounding ties
    let px: Vec<u64> = oracles()["errmap32_r4_x10_pixels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    let header = b"P5\n32 32\n65535\n".len();
    for (i, chunk) in golden[header..].chunks(2).enumerate() {
        let v = u16::from_be_bytes([chunk[0], chunk[1]]) as i64;
        assert!((v - px[i] as i64).abs() <= 1, "pixel {i}: {v} vs {}", px[i]);
    }
}

/// Values written by the Python encoder: re = 0.25·i − 3, im = (−1)^i / (i + 1).
fn py_value(i: usize) -> C64 {
    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
    C64::new(0.25 * i as f64 - 3.0, sign / (i as f64 + 1.0))
}

#[test]
fn python_written_tensors_parse_identically() {
    let c128 = read_tensor(dir().join("py_c128.cfk")).unwrap();
    assert_eq!(c128.shape(), Shape5::new(3, 2, 2, 2, 3).unwrap());
    for (i, z) in c128.as_slice().iter().enumerate() {
        assert_eq!(*z, py_value(i));
    }
    let c64 = read_tensor(dir().join("py_c64.cfk")).unwrap();
    for (i, z) in c64.as_slice().iter().enumerate() {
        let w = py_value(i);
        assert_eq!(*z, C64::new(w.re as f32 as f64, w.im as f32 as f64));
    }
    let m = read_mask(dir().join("py_mask.cfk")).unwrap();
    for (i, &b) in m.as_slice().iter().enumerate() {
        assert_eq!(b, i % 3 == 0);
    }
}

#[test]
fn ssos_matches_brute_force_dft() {
    let full = read_tensor(dir().join("phantom32.cfk")).unwrap();
    let s = full.shape();
    // centred inverse DFT: image[x] = sum_k d[k] exp(+2πi (k - n/2)(x - n/2) / n) / sqrt(n)
    let n = s.nx;
    let w = |a: usize, b: usize| {
        let ph = 2.0 * std::f64::consts::PI * ((a as f64 - (n / 2) as f64) * (b as f64 - (n / 2) as f64)) / n as f64;
        C64::from_polar(1.0 / (n as f64).sqrt(), ph)
    };
    let img = ssos_image(&full, 0).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for x in 0..s.nx {
        for y in 0..s.ny {
            let mut acc = 0.0;
            for c in 0..s.nc {
                let mut v = C64::new(0.0, 0.0);
                for kx in 0..s.nx {
                    for ky in 0..s.ny {
                        v += full.get([kx, ky, 0, c, 0]) * w(kx, x) * w(ky, y);
                    }
                }
                acc += v.norm_sqr();
            }
            let o = acc.sqrt();
            num += (o - img.get(x, y, 0)).powi(2);
            den += o * o;
        }
    }
    assert!((num / den).sqrt() <= 1e-10);
}
