use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn tessera(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tessera")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn lamination_of_basilica() {
    let out = tessera(&["lamination", "--poly", r#"{"d":2,"a":[-1]}"#, "--period-bound", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["result"]["classes"], serde_json::json!([["1/3", "2/3"]]));
    assert_eq!(r["config"]["period_bound"], 3);
    assert_eq!(r["config"]["tol_cluster"], 1e-5);
}

#[test]
fn tune_airplane_by_basilica() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = tessera(&["tune", "--f0", "airplane", "--g", "basilica", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(r, report(&out));
    let rep = &r["result"]["report"];
    for flag in ["lamination_ok", "renorm_connected", "marking_ok"] {
        assert_eq!(rep[flag], true, "{flag}");
    }
    assert_eq!(r["result"]["all_ok"], true);
    let c = r["result"]["tuned"]["a"][0][0].as_f64().unwrap();
    assert!((c + 1.772892903).abs() < 1e-8, "{c}");
}

#[test]
fn wrong_fiber_is_a_domain_failure() {
    let tuned = r#"{"d":2,"a":[-1.7728929034395533]}"#;
    let out = tessera(&["verify", "--f0", "airplane", "--g", "rabbit", "--poly", tuned]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["result"]["failing_clause"], "(c) straightening round trip");
    let out = tessera(&["straighten", "--f0", "airplane", "--poly", r#"{"d":2,"a":[1]}"#]);
    assert_eq!(out.status.code(), Some(1));
    assert!(report(&out)["error"].as_str().unwrap().contains("escapes"));
}

#[test]
fn render_rays_png() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rays.png");
    let out = tessera(&["render", "--poly", "airplane", "--what", "rays", "--angles", "3/7,5/7,6/7", "--res", "96", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    let rays = report(&out)["result"]["rays"].as_array().unwrap().clone();
    assert_eq!(rays.len(), 3);
    assert!(rays.iter().all(|r| r["landing"].is_array()));
}

#[test]
fn landing_mask_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mask.pgm");
    let out = tessera(&["landing-mask", "--poly", "airplane", "--depth", "2", "--res", "64", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let bytes = std::fs::read(&path).unwrap();
    assert!(bytes.starts_with(b"P5\n64 64\n255\n"));
    assert_eq!(bytes.len(), 13 + 64 * 64);
}

#[test]
fn usage_errors_exit_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("never.png");
    let p = path.to_str().unwrap();
    let cases: [&[&str]; 6] = [
        &["render", "--poly", "airplane", "--res", "0", "--out", p],
        &["render", "--poly", "airplane", "--what", "rays", "--out", p],
        &["render", "--poly", "airplane", "--what", "rays", "--angles", "1/0", "--out", p],
        &["render", "--poly", r#"{"d":3,"a":[1]}"#, "--out", p],
        &["render", "--poly", "airplane", "--bogus", "--out", p],
        &["landing-mask", "--poly", "nowhere", "--out", p],
    ];
    for args in cases {
        let out = tessera(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        assert!(!Path::new(p).exists(), "{args:?}");
    }
    let missing = dir.path().join("no/such/dir/r.json");
    let out = tessera(&["tune", "--f0", "airplane", "--g", "basilica", "--out", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let args = ["thurston", "--angle", "3/7", "--seed", "7"];
    let a = tessera(&args);
    let b = tessera(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(report(&a)["seed"], 7);
    let args = ["lamination", "--poly", "rabbit", "--period-bound", "3"];
    assert_eq!(tessera(&args).stdout, tessera(&args).stdout);
}

#[test]
fn scheme_and_audit() {
    let out = tessera(&["scheme", "--poly", "airplane"]);
    let r = report(&out);
    assert_eq!(r["result"]["scheme"]["r"]["v0"], 3);
    assert_eq!(r["result"]["internal_angles"][0], "2/7");
    let bad = tessera(&["scheme", "--scheme", r#"{"vertices":["v0"],"sigma":{"v0":"v1"},"delta":{"v0":2},"r":{"v0":1}}"#]);
    assert_eq!(bad.status.code(), Some(2));
    let out = tessera(&["audit", "--notched-depth", "4", "--res", "243"]);
    let r = report(&out);
    assert!(r["result"]["error"].as_f64().unwrap() < 5e-3);
}
