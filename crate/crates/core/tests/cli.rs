use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples").join(name)
}

fn fixmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fixmpc")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn git_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()));
    h.update(bytes);
    hex::encode(h.finalize())
}

fn check_manifest(dir: &Path) -> Value {
    let m: Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["tool"], "fixmpc");
    let files = m["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        let bytes = fs::read(dir.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), git_hash(&bytes), "{}", f["path"]);
    }
    m
}

#[test]
fn validate_accepts_and_rejects() {
    let ok = fixmpc(&["validate", example("double_integrator.json").to_str().unwrap()]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    let bad = fixmpc(&["validate", example("indefinite_q.json").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    let text = stdout(&bad) + &String::from_utf8_lossy(&bad.stderr);
    assert!(text.contains('Q'), "{text}");
}

#[test]
fn missing_and_malformed_configs_exit_1() {
    let o = fixmpc(&["validate", "/nonexistent/problem.json"]);
    assert_eq!(o.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    fs::write(&p, "{\"a\": [[1.0]]").unwrap();
    let o = fixmpc(&["solve", p.to_str().unwrap(), "--method", "fgm"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn hwmodel_prints_csv() {
    let o = fixmpc(&["hwmodel", "--family", "admm", "--nA", "216", "--P", "1,2", "--iters", "40", "--warm-start"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("family,p,multipliers"), "{header}");
    assert_eq!(lines.count(), 2);
    assert!(text.contains("23.4"), "{text}");
}

#[test]
fn fixed_point_solve_writes_hashed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fgm");
    let o = fixmpc(&[
        "solve",
        example("double_integrator.json").to_str().unwrap(),
        "--method",
        "fgm",
        "--frac-bits",
        "16",
        "--iters",
        "30",
        "--x0",
        "1,-0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace.csv", "offline.json", "solution.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    check_manifest(&out);
    let sol: Value = serde_json::from_slice(&fs::read(out.join("solution.json")).unwrap()).unwrap();
    let eta = sol["eta_observed"].as_f64().unwrap();
    assert!(eta <= sol["eta_bound"].as_f64().unwrap(), "{sol}");
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 32);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = fixmpc(&[
            "solve",
            example("soft_double_integrator.json").to_str().unwrap(),
            "--method",
            "admm",
            "--frac-bits",
            "18",
            "--iters",
            "40",
            "--x0",
            "0.9,0.3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        check_manifest(&out);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["trace.csv", "offline.json", "solution.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn certify_reports_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cert");
    let o = fixmpc(&[
        "certify",
        example("double_integrator.json").to_str().unwrap(),
        "--method",
        "fgm",
        "--frac-bits",
        "16",
        "--iters",
        "20",
        "--x-bound",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = check_manifest(&out);
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert!(files.contains(&"report.json"), "{files:?}");
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("spectral_radius"), "{report}");
}

#[test]
fn undersized_integer_bits_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixmpc(&[
        "solve",
        example("double_integrator.json").to_str().unwrap(),
        "--method",
        "fgm",
        "--frac-bits",
        "16",
        "--int-bits",
        "1",
        "--x0",
        "1,-0.5",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
