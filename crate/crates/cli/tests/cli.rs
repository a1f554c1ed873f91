//! End-to-end checks of the command-line surface and its exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_windtree"))
}

fn table_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../tables").join(name)
}

#[test]
fn constants_usage_error() {
    let out = bin().args(["constants", "--m", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constants_json_values() {
    let out = bin().args(["constants", "--m", "2", "--max", "--format", "json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["delta"], "2/3");
    assert_eq!(v[0]["c"], "1/2 /pi^2");
    assert_eq!(v[1]["c"], "10/3 /pi^2");
    assert_eq!(v[0]["c_area"], "1/3 /pi^2");
}

#[test]
fn identities_pass() {
    let out = bin().args(["identities", "--m-max", "25"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn identities_usage_error() {
    let out = bin().args(["identities", "--m-max", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn count_from_file_and_generator_agree() {
    let a = bin()
        .args(["count", "--table", table_path("square_half.wt").to_str().unwrap()])
        .args(["--l", "6", "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    let b = bin()
        .args(["count", "--gen", "square 1/2 1/2", "--l", "6", "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn count_bad_file_is_input_error() {
    let out = bin().args(["count", "--table", "/nonexistent.wt", "--l", "5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn count_rejects_invalid_table() {
    let out = bin()
        .args(["count", "--gen", "denominator 4\nvertex 0 1\nvertex 3 1\nvertex 3 3\nvertex 0 3"])
        .args(["--l", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("interior"), "unexpected message: {err}");
}

#[test]
fn check_passes_on_m1() {
    let out = bin().args(["check", "--gen", "square 1/2 1/2", "--l", "8"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn search_failure_is_property_exit_code() {
    // axis directions alone carry no good cylinder on the m=1 square table
    let out = bin()
        .args(["search", "--gen", "square 1/2 1/2", "--p-max", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn search_finds_good_cylinder() {
    let out = bin()
        .args(["search", "--table", table_path("h_d5.wt").to_str().unwrap(), "--p-max", "8"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("good cylinder"), "{text}");
}

#[test]
fn diffuse_seed_reproducible() {
    let run = || {
        bin()
            .args(["diffuse", "--gen", "square 1/2 1/2", "--t-max", "1e4", "--n", "4"])
            .args(["--seed", "9", "--format", "json"])
            .output()
            .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn diffuse_zero_orbits_is_usage_error() {
    let out = bin()
        .args(["diffuse", "--gen", "square 1/2 1/2", "--n", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn recur_runs() {
    let out = bin()
        .args(["recur", "--gen", "plus", "--t-max", "1e4", "--n", "10", "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["fraction"].as_f64().unwrap() >= 0.0);
}
