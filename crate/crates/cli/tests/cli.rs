//! End-to-end checks of the installed binary: exit codes, determinism, and
//! the model/report formats.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dejong"))
}

fn write_sign_product_model(dir: &Path) -> PathBuf {
    let path = dir.join("sign-product.json");
    std::fs::write(
        &path,
        r#"{
  "coordinates": [
    {"support": [-1.0, 1.0], "probs": [0.5, 0.5]},
    {"support": [-1.0, 1.0], "probs": [0.5, 0.5]}
  ],
  "components": [
    {"subset": [1, 2], "values": [1.0, -1.0, -1.0, 1.0]}
  ]
}"#,
    )
    .unwrap();
    path
}

#[test]
fn shadows_reports_the_order_two_constant() {
    let out = bin().args(["shadows", "--d", "2"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("C_2 = 13"), "missing constant in: {stdout}");
}

#[test]
fn shadows_above_cap_exits_with_capability_code() {
    let out = bin().args(["shadows", "--d", "9"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bound_matches_known_total() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_sign_product_model(dir.path());
    let report = dir.path().join("report.json");
    let out = bin()
        .args(["bound", "--model"])
        .arg(&model)
        .args(["--mode", "cd-rho", "--out"])
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["schema"], "dejong-report/1");
    let total = doc["results"]["total"].as_f64().unwrap();
    assert!((total - 9.5539).abs() < 5e-4, "total {total}");
    assert_eq!(doc["results"]["kappa"].as_f64().unwrap(), 17.0);
}

#[test]
fn check_passes_on_clean_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_sign_product_model(dir.path());
    let out = bin().args(["check", "--model"]).arg(&model).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PASS regression"));
}

#[test]
fn product_check_matches_on_all_trials() {
    let out = bin()
        .args(["product-check", "--seed", "7", "--trials", "50"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("50/50 matches"), "{stdout}");
}

#[test]
fn product_check_requires_seed() {
    let out = bin().args(["product-check"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_sign_product_model(dir.path());
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    for r in [&r1, &r2] {
        let out = bin()
            .args(["simulate", "--model"])
            .arg(&model)
            .args(["--seed", "11", "--samples", "20000", "--out"])
            .arg(r)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(
        std::fs::read_to_string(&r1).unwrap(),
        std::fs::read_to_string(&r2).unwrap()
    );
}

#[test]
fn missing_model_file_is_a_model_error() {
    let out = bin()
        .args(["moments", "--model", "/nonexistent/path.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tiny_budget_is_a_budget_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_sign_product_model(dir.path());
    let out = bin()
        .args(["check", "--model"])
        .arg(&model)
        .args(["--budget", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn report_covers_all_sections() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_sign_product_model(dir.path());
    let path = dir.path().join("full.json");
    let out = bin()
        .args(["report", "--model"])
        .arg(&model)
        .args(["--seed", "3", "--samples", "5000", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for section in ["decompose", "check", "moments", "bound", "shadows", "simulate"] {
        assert!(!doc["results"][section].is_null(), "missing section {section}");
    }
}

#[test]
fn vector_model_bound_multi() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vector.json");
    std::fs::write(
        &path,
        r#"{
  "coordinates": [
    {"support": [-1.0, 1.0], "probs": [0.5, 0.5]},
    {"support": [-1.0, 1.0], "probs": [0.5, 0.5]},
    {"support": [-1.0, 1.0], "probs": [0.5, 0.5]}
  ],
  "vector": [
    {"order": 1, "components": [{"subset": [1], "values": [-1.0, 1.0]}]},
    {"order": 2, "components": [{"subset": [2, 3], "values": [1.0, -1.0, -1.0, 1.0]}]}
  ]
}"#,
    )
    .unwrap();
    let report = dir.path().join("multi.json");
    let out = bin()
        .args(["bound-multi", "--model"])
        .arg(&path)
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["results"]["q1"], 1);
    assert_eq!(doc["results"]["lambda_min"].as_f64().unwrap(), 1.0);
}

#[test]
fn generator_model_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gen.json");
    std::fs::write(
        &path,
        r#"{
  "generator": {
    "kind": "homogeneous-sum",
    "n": 6,
    "d": 2,
    "law": {"support": [-1.0, 1.0], "probs": [0.5, 0.5]},
    "balanced": true
  }
}"#,
    )
    .unwrap();
    let out = bin().args(["moments", "--model"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
