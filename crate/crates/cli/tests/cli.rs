use std::path::Path;
use std::process::{Command, Output};

fn cfrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfrecon")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn every_subcommand_has_help_listing_its_flags() {
    let cases: [(&str, &[&str]); 5] = [
        ("simulate", &["--shape", "--coil-support", "--kernel", "--conv", "--ellipses", "--edge-width", "--seed", "--out"]),
        ("mask", &["--pattern", "--shape", "--like", "--accel", "--acs-extent", "--density-sigma", "--seed", "--out"]),
        (
            "recon",
            &["--data", "--mask", "--kernel", "--rank", "--tol", "--max-iters", "--inner-max", "--conv", "--acs", "--method", "--out"],
        ),
        ("eval", &["--ref", "--rec", "--error-map", "--scale", "--frame", "--out"]),
        ("gram-check", &["--data", "--kernel", "--conv", "--out"]),
    ];
    for (cmd, flags) in cases {
        let o = cfrecon(&[cmd, "--help"]);
        assert!(o.status.success(), "{cmd}");
        let text = String::from_utf8_lossy(&o.stdout);
        for f in flags.iter().chain(&["--threads"]) {
            assert!(text.contains(f), "{cmd} help lacks {f}");
        }
    }
    assert!(cfrecon(&["--help"]).status.success());
}

#[test]
fn errors_are_distinct_and_named() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = cfrecon(&["recon", "--bogus"]);
    assert!(!unknown.status.success());
    assert!(stderr(&unknown).contains("--bogus"));

    let missing = cfrecon(&[
        "recon", "--data", &path(tmp.path(), "nope.cfk"), "--mask", &path(tmp.path(), "m.cfk"),
        "--kernel", "3,3,1,2,1", "--rank", "4", "--out", &path(tmp.path(), "r.cfk"),
    ]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("missing file"), "{}", stderr(&missing));
    assert!(stderr(&missing).contains("nope.cfk"));

    let full = path(tmp.path(), "full.cfk");
    let mask = path(tmp.path(), "mask.cfk");
    assert!(cfrecon(&["simulate", "--shape", "12,12,1,2,1", "--kernel", "3,3,1,2,1", "--seed", "1", "--out", &full]).status.success());
    assert!(cfrecon(&["mask", "--pattern", "uniform2d", "--like", &full, "--accel", "2", "--seed", "1", "--out", &mask]).status.success());
    let rank = cfrecon(&[
        "recon", "--data", &full, "--mask", &mask, "--kernel", "3,3,1,2,1", "--rank", "18",
        "--out", &path(tmp.path(), "r.cfk"),
    ]);
    assert_eq!(rank.status.code(), Some(1));
    assert!(stderr(&rank).contains("rank 18 out of range"), "{}", stderr(&rank));

    let messages = [stderr(&unknown), stderr(&missing), stderr(&rank)];
    assert_ne!(messages[0], messages[1]);
    assert_ne!(messages[1], messages[2]);
    assert_ne!(messages[0], messages[2]);
}

#[test]
fn pipeline_writes_manifests_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |n: &str| path(tmp.path(), n);
    let ok = |args: &[&str]| {
        let o = cfrecon(args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    };
    ok(&["simulate", "--shape", "16,16,1,2,1", "--kernel", "3,3,1,2,1", "--seed", "3", "--out", &p("full.cfk")]);
    ok(&["mask", "--pattern", "uniform2d_acs", "--like", &p("full.cfk"), "--accel", "2", "--acs-extent", "6,6,1", "--seed", "3", "--out", &p("mask.cfk")]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("full.cfk.manifest.json")).unwrap()).unwrap();
    let rank = manifest["metrics"]["true_rank"].as_u64().unwrap().to_string();
    assert_eq!(manifest["seed"], 3);
    for (out, threads) in [("a.cfk", "1"), ("b.cfk", "2")] {
        ok(&[
            "recon", "--data", &p("full.cfk"), "--mask", &p("mask.cfk"), "--kernel", "3,3,1,2,1", "--rank", &rank,
            "--max-iters", "5", "--threads", threads, "--out", &p(out),
        ]);
    }
    assert_eq!(std::fs::read(p("a.cfk")).unwrap(), std::fs::read(p("b.cfk")).unwrap());
    ok(&["eval", "--ref", &p("full.cfk"), "--rec", &p("a.cfk"), "--error-map", &p("err.pgm"), "--out", &p("eval.json")]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("eval.json")).unwrap()).unwrap();
    assert!(report["kspace_snr_db"].as_f64().unwrap().is_finite());
    assert!(report["outer_iters"].as_u64().unwrap() <= 5);
    assert!(std::fs::read(p("err.pgm")).unwrap().starts_with(b"P5\n16 16\n"));
    ok(&["gram-check", "--data", &p("full.cfk"), "--kernel", "3,3,1,2,1"]);
}
