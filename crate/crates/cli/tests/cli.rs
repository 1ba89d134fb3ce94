//! End-to-end runs of the `freeconv` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use freeconv_core::closed_forms::two_atom_self_conv;
use freeconv_core::io::read_density_csv;
use serde_json::Value;
use tempfile::TempDir;

fn freeconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freeconv")).args(args).env_remove("FREECONV_THREADS").output().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let line = text.lines().last().unwrap();
    serde_json::from_str(line).unwrap()
}

const ATOMS01: &str = r#"{"type":"atoms","points":[{"x":0.0,"w":0.5},{"x":1.0,"w":0.5}]}"#;

#[test]
fn semicircle_add_prints_parameter() {
    let out = freeconv(&["oracle", "semicircle-add", "--w1sq", "1", "--w2sq", "1"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "2");
}

#[test]
fn convolve_matches_two_atom_profile() {
    let dir = TempDir::new().unwrap();
    let m = write(&dir, "atoms01.json", ATOMS01);
    let out_csv = dir.path().join("out.csv");
    let out = freeconv(&["convolve", "--n1", s(&m), "--n2", s(&m), "--epsilon", "1e-3", "-o", s(&out_csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let est = read_density_csv(std::io::BufReader::new(std::fs::File::open(&out_csv).unwrap())).unwrap();
    assert_eq!(est.epsilon_used, 1e-3);
    assert!(est.atoms.is_empty());
    let oracle = two_atom_self_conv(0.5, 1.0).unwrap();
    let worst = est
        .lambdas
        .iter()
        .zip(&est.rho)
        .filter(|(l, _)| (0.05..=1.95).contains(*l))
        .map(|(&l, &r)| (r - oracle.density(l)).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 5e-3, "{worst}");
}

#[test]
fn truncated_json_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let good = write(&dir, "atoms01.json", ATOMS01);
    let broken = write(&dir, "broken.json", "{\"type\":\"atoms\",\n\"points\":[{\"x\":0");
    let out = freeconv(&["convolve", "--n1", s(&broken), "--n2", s(&good), "-o", s(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    let v = stderr_json(&out);
    assert_eq!(v["error"], "validation");
    assert_eq!(v["path"], s(&broken));
    assert_eq!(v["line"], 2);
    assert!(v["column"].as_u64().unwrap() > 0);
}

#[test]
fn invalid_measure_and_flags_are_rejected() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", r#"{"type":"atoms","points":[{"x":0.0,"w":0.4}]}"#);
    let out = freeconv(&["density", "--measure", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "validation");

    let good = write(&dir, "atoms01.json", ATOMS01);
    for args in [
        vec!["convolve", "--n1", s(&good), "--n2", s(&good), "--epsilon", "0"],
        vec!["mc-spectrum", "--n1", s(&good), "--n2", s(&good), "--n", "1"],
        vec!["mc-spectrum", "--n1", s(&good), "--n2", s(&good), "--trials", "0"],
        vec!["haar-check", "--z-re", "1.0"],
        vec!["freeness", "--ms", "1,1", "--t", "sign:1", "--t", "sign:1"],
        vec!["convolve", "--n1", s(&good)],
    ] {
        let out = freeconv(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_json(&out)["error"], "validation");
    }
}

#[test]
fn non_convergence_exit_code_names_the_point() {
    let dir = TempDir::new().unwrap();
    let m = write(&dir, "atoms01.json", ATOMS01);
    let out = freeconv(&["convolve", "--n1", s(&m), "--n2", s(&m), "--max-iter", "1", "--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(3));
    let v = stderr_json(&out);
    assert_eq!(v["error"], "non_convergence");
    assert!(v["lambda"].is_number() && v["y"].as_f64().unwrap() > 0.0);
}

#[test]
fn subcommands_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let m = write(&dir, "atoms01.json", ATOMS01);
    let sc = write(&dir, "sc.json", r#"{"type":"semicircle","w2":1.0}"#);
    let runs: Vec<Vec<&str>> = vec![
        vec!["convolve", "--n1", s(&m), "--n2", s(&sc), "--grid-points", "50"],
        vec!["density", "--measure", s(&sc), "--grid-points", "50"],
        vec!["oracle", "two-atom", "--alpha", "0.75", "--a", "1"],
        vec!["oracle", "arcsine", "--a", "1"],
        vec!["oracle", "semicircle", "--w2sq", "2"],
        vec!["oracle", "mp", "--c", "0.5", "--grid-points", "40"],
        vec!["rtransform", "--n1", s(&sc), "--n2", s(&m), "--s-im", "0.05,0.1"],
        vec!["mc-spectrum", "--n1", s(&m), "--n2", s(&sc), "--n", "32", "--trials", "3", "--seed", "9"],
        vec!["mc-variance", "--n1", s(&m), "--n2", s(&sc), "--ns", "8,16", "--trials", "50", "--seed", "2"],
        vec!["freeness", "--n", "16", "--ms", "1,-1", "--t", "sign:1", "--t", s(&sc), "--trials", "4"],
        vec!["haar-check", "--n", "16", "--z-re", "0.3", "--trials", "4", "--seed", "5"],
    ];
    for args in runs {
        let a = freeconv(&args);
        assert!(a.status.success(), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        let b = Command::new(env!("CARGO_BIN_EXE_freeconv")).args(&args).env("FREECONV_THREADS", "1").output().unwrap();
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn oracle_csv_has_density_shape() {
    let out = freeconv(&["oracle", "two-atom", "--alpha", "0.75", "--a", "1", "--grid-points", "20"]);
    let est = read_density_csv(&out.stdout[..]).unwrap();
    assert_eq!(est.lambdas.len(), 20);
    assert_eq!(est.atoms, vec![(0.0, 0.5)]);
}

#[test]
fn rtransform_defect_is_small() {
    let dir = TempDir::new().unwrap();
    let sc = write(&dir, "sc.json", r#"{"type":"semicircle","w2":1.0}"#);
    let pm = write(&dir, "pm.json", r#"{"type":"atoms","points":[{"x":-1.0,"w":0.5},{"x":1.0,"w":0.5}]}"#);
    let out = freeconv(&["rtransform", "--n1", s(&sc), "--n2", s(&pm)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let first = text.lines().next().unwrap();
    let defect: f64 = first.strip_prefix("# max_defect,").unwrap().parse().unwrap();
    assert!(defect <= 1e-6, "{defect}");
    assert_eq!(text.lines().count(), 12);
}

#[test]
fn threads_flag_validated() {
    let out = freeconv(&["--threads", "0", "oracle", "semicircle-add", "--w1sq", "1", "--w2sq", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = freeconv(&["--threads", "2", "oracle", "semicircle-add", "--w1sq", "1", "--w2sq", "2"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "3");
}
