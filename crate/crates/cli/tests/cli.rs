use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn instance(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../instances").join(name)
}

fn fpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpf")).args(args).output().expect("fpf runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn point(report: &Value) -> Vec<f64> {
    report["fixed_point"]["point"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
}

fn path(p: &PathBuf) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_matching_pennies() {
    let o = fpf(&["solve", path(&instance("matching_pennies.json"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["verification"]["pass"], Value::Bool(true));
    for v in &point(&r)[..4] {
        assert!((v - 0.5).abs() < 1e-6, "{v}");
    }
}

#[test]
fn verify_divisions() {
    let cake = instance("weighted_cake.json");
    let bad = fpf(&["verify", path(&cake), path(&instance("bad_division.point.json"))]);
    assert_eq!(code(&bad), 2);
    assert_eq!(json(&bad)["pass"], Value::Bool(false));
    let good = fpf(&["verify", path(&cake), path(&instance("fair_division.point.json"))]);
    assert_eq!(code(&good), 0, "{}", String::from_utf8_lossy(&good.stdout));
}

#[test]
fn compiled_circuit_solves_like_the_instance() {
    let dir = tempfile::tempdir().unwrap();
    let circ = dir.path().join("kkm.circ");
    let kkm = instance("cyclic_kkm.json");
    let o = fpf(&["compile", path(&kkm), "-o", circ.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let direct = fpf(&["solve", path(&kkm)]);
    let via = fpf(&["solve", "--circuit", circ.to_str().unwrap()]);
    assert_eq!(code(&direct), 0);
    assert_eq!(code(&via), 0, "{}", String::from_utf8_lossy(&via.stdout));
    assert_eq!(json(&direct)["fixed_point"], json(&via)["fixed_point"]);
}

#[test]
fn runs_are_deterministic_modulo_timing() {
    let inst = instance("weighted_cake.json");
    let run = || {
        let mut r = json(&fpf(&["solve", path(&inst), "--seed", "7"]));
        r.as_object_mut().unwrap().remove("timing");
        r
    };
    assert_eq!(run(), run());
}

#[test]
fn report_summarizes_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.json");
    let o = fpf(&["solve", path(&instance("opposed_hz.json")), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = fpf(&["report", out.to_str().unwrap()]);
    assert_eq!(code(&s), 0);
    let text = String::from_utf8(s.stdout).unwrap();
    assert!(text.contains("converged") && text.contains("PASS"), "{text}");
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"restarts": 3, "seed": 5}"#).unwrap();
    let r = json(&fpf(&["solve", path(&instance("halving_map.json")), "--config", cfg.to_str().unwrap(), "--seed", "9"]));
    assert_eq!(r["config"]["restarts"], 3);
    assert_eq!(r["config"]["seed"], 9);
    std::fs::write(&cfg, r#"{"restart": 3}"#).unwrap();
    assert_eq!(code(&fpf(&["solve", path(&instance("halving_map.json")), "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn grid_oracle() {
    let r = fpf(&["solve", path(&instance("halving_map.json")), "--grid"]);
    assert_eq!(code(&r), 0);
    assert!(point(&json(&r))[0].abs() < 1e-9);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&fpf(&[])), 1);
    assert_eq!(code(&fpf(&["solve", "--bogus"])), 1);
    assert_eq!(code(&fpf(&["solve", "/nonexistent.json"])), 1);
    assert_eq!(code(&fpf(&["--help"])), 0);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"version\": 1,\n  \"kind\" \"nash\"\n}").unwrap();
    let o = fpf(&["solve", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    // One iteration from one start cannot reach the mixed equilibrium.
    let o = fpf(&["solve", path(&instance("matching_pennies.json")), "--max-iters", "1", "--restarts", "1"]);
    assert_eq!(code(&o), 3);
}
