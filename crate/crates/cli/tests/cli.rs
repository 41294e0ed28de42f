use std::process::{Command, Output};

use serde_json::Value;

fn kplane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kplane")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn transform_reports_value_and_params() {
    let out = kplane(&["transform", "--field", "builtin:gaussian"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["value"].as_f64().unwrap() - std::f64::consts::PI.sqrt()).abs() < 1e-6);
    assert_eq!(v["params"]["command"], "transform");
    assert_eq!(v["params"]["n"], 2);
    assert_eq!(v["params"]["seed"], 1);
}

#[test]
fn estimates_are_reproducible_byte_for_byte() {
    let args = ["ratio", "--field", "builtin:extremizer", "--samples", "5000", "--seed", "9"];
    let a = kplane(&args);
    let b = kplane(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let mut threaded = args.to_vec();
    threaded.extend(["--workers", "3"]);
    let c = json(&kplane(&threaded));
    assert_eq!(json(&a)["value"], c["value"]);
}

#[test]
fn permissibility_verdicts() {
    let v = json(&kplane(&["permissible", "--radii", "1,1,0.9", "--coeffs", "0.5,0.5"]));
    assert_eq!(v["permissible"], true);
    let v = json(&kplane(&["permissible", "--radii", "1,1,1", "--coeffs", "0.5,0.5"]));
    assert_eq!(v["permissible"], false);
}

#[test]
fn symmetrize_writes_commented_csv() {
    let out = kplane(&["symmetrize", "--steps", "2", "--samples", "2000"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let params: Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(params["steps"], 2);
    assert_eq!(lines.next(), Some("step,tag,ratio,stderr,distance"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn output_file_receives_report() {
    let path = std::env::temp_dir().join(format!("kplane-cli-{}.json", std::process::id()));
    let p = path.to_str().unwrap();
    let out = kplane(&["--out", p, "transform"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(v["value"].is_number());
    std::fs::remove_file(path).unwrap();
}

#[test]
fn exit_codes() {
    let usage = kplane(&["bogus"]);
    assert_eq!(usage.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&usage.stderr).contains("Usage"));
    assert_eq!(kplane(&["transform", "--field", "builtin:gaussian:cx=1"]).status.code(), Some(2));
    assert_eq!(kplane(&["--k", "2", "transform"]).status.code(), Some(2));
    assert_eq!(kplane(&["transform", "--samples", "0"]).status.code(), Some(2));
    let zero = kplane(&["ratio", "--field", "builtin:zero", "--samples", "1000"]);
    assert_eq!(zero.status.code(), Some(1));
    assert!(zero.stdout.is_empty());
    assert_eq!(kplane(&["--help"]).status.code(), Some(0));
}
