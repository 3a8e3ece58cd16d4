use std::path::Path;
use std::process::{Command, Output};

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn lab")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lab(dir, args);
    assert!(
        out.status.success(),
        "lab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn pipeline_from_grid_to_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["grid", "--points", "150", "--iterations", "30", "--out", "g.csv"]);
    ok(d, &["simulate", "--grid", "g.csv", "--nu", "1.5", "--ell", "0.2", "--n", "80", "--seed", "4", "--out", "d.csv"]);
    ok(d, &["estimate", "--data", "d.csv", "--out", "s.bin"]);
    let net = ok(d, &["net", "--sim", "s.bin", "--density", "0.05", "--out", "n.csv"]);
    assert!(net.contains("density 0.05"), "{net}");
    ok(d, &["measure", "--net", "n.csv", "--grid", "g.csv", "--out", "m"]);
    assert!(d.join("m/summary.json").exists());
    assert!(d.join("m/nodes.csv").exists());
    let scan = ok(d, &["bundles", "--net", "n.csv", "--grid", "g.csv", "--eps-deg", "15"]);
    let v: serde_json::Value = serde_json::from_str(&scan).unwrap();
    assert!(v["fraction"].as_f64().unwrap() >= 0.0);
}

#[test]
fn simulate_is_reproducible_by_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["grid", "--kind", "gaussian", "--resolution-deg", "30", "--out", "g.csv"]);
    for name in ["a.csv", "b.csv"] {
        ok(d, &["simulate", "--grid", "g.csv", "--nu", "0.5", "--ell", "0.3", "--n", "20", "--seed", "9", "--out", name]);
    }
    ok(d, &["simulate", "--grid", "g.csv", "--nu", "0.5", "--ell", "0.3", "--n", "20", "--seed", "10", "--out", "c.csv"]);
    let a = std::fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.csv")).unwrap());
    assert_ne!(a, std::fs::read(d.join("c.csv")).unwrap());
}

#[test]
fn run_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("exp.toml"),
        r#"
name = "tiny"
seed = 1
repetitions = 2
measures = ["degree", "clustering"]
compare_ground_truth = true

[grid]
kind = "fekete"
points = 80
iterations = 20

[field]
nu = 0.5
ell = 0.3
n = 40

[construction]
densities = [0.1]
"#,
    )
    .unwrap();
    let stdout = ok(d, &["run", "exp.toml", "--out", "res"]);
    assert!(stdout.contains("tiny"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("res/report.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["master_seed"], 1);
    assert!(!report["records"].as_array().unwrap().is_empty());
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["grid", "--points", "60", "--iterations", "10", "--out", "g.csv"]);
    ok(d, &["simulate", "--grid", "g.csv", "--nu", "0.5", "--ell", "0.3", "--n", "30", "--out", "d.csv"]);
    ok(d, &["estimate", "--data", "d.csv", "--out", "s.bin"]);

    let bad_arg = lab(d, &["net", "--sim", "s.bin", "--density", "2", "--out", "x.csv"]);
    assert_eq!(bad_arg.status.code(), Some(2));
    let missing = lab(d, &["net", "--sim", "nope.bin", "--density", "0.1", "--out", "x.csv"]);
    assert_eq!(missing.status.code(), Some(3));
    let usage = lab(d, &["net", "--sim", "s.bin"]);
    assert_eq!(usage.status.code(), Some(2));

    std::fs::write(d.join("bad.toml"), "name = \"x\"\nseed = 1\nrepetitions = 0\n[grid]\nkind = \"fekete\"\npoints = 10\n").unwrap();
    let cfg = lab(d, &["run", "bad.toml"]);
    assert_eq!(cfg.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&cfg.stderr).contains("repetitions"));

    std::fs::write(d.join("garbage.bin"), b"not a matrix").unwrap();
    let fmt = lab(d, &["net", "--sim", "garbage.bin", "--density", "0.1", "--out", "x.csv"]);
    assert_eq!(fmt.status.code(), Some(3));
}
