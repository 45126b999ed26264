use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn weakshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakshift")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
        .display()
        .to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_prints_csv_and_is_repeatable() {
    let a = weakshift(&["run", &scenario("calibration")]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = stdout(&a);
    assert!(text.starts_with("scenario_id,axis,quadrature,"));
    assert_eq!(text.lines().count(), 5);
    let b = weakshift(&["run", &scenario("calibration")]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn run_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = weakshift(&["run", &scenario("jozsa_baseline"), "--out", &out]);
    assert!(o.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("jozsa_baseline.json")).unwrap()).unwrap();
    assert_eq!(json["scenario_id"], "jozsa_baseline");
    assert!(dir.path().join("jozsa_baseline.csv").exists());
}

#[test]
fn missing_file_is_a_config_error() {
    let o = weakshift(&["run", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path: PathBuf = dir.path().join("bad.json");
    std::fs::write(&path, "{\"schema_version\": 1, \"id\": \"x\"").unwrap();
    let o = weakshift(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));
}

#[test]
fn sweep_reports_slope() {
    let o = weakshift(&["sweep", &scenario("calibration"), "--multipliers", "2,1,0.5"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("residual slope"));
    assert_eq!(stdout(&o).lines().count(), 1 + 3 * 4);
    let short = weakshift(&["sweep", &scenario("calibration"), "--multipliers", "1,0.5"]);
    assert_eq!(short.status.code(), Some(2));
}

#[test]
fn lg_check_reports_opposite_cross_correlations() {
    let o = weakshift(&["lg-check", "--l", "1"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["corr_px_y"].as_f64().unwrap() + 0.5).abs() < 1e-3);
    assert!((v["corr_py_x"].as_f64().unwrap() - 0.5).abs() < 1e-3);
}

#[test]
fn entangle_flags_negative_determinant() {
    let o = weakshift(&["entangle", "--alpha", "0.25", "--beta", "0.25", "--gamma", "-0.1"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["direct"]["entangled"], true);
    assert_eq!(v["from_shifts"]["entangled"], true);
    let bad = weakshift(&["entangle", "--alpha", "0.1", "--beta", "0.1", "--gamma", "0.5"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn appendix_a_outputs_both_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = weakshift(&["appendix-a", "--sigma1", "1", "--sigma2", "0.8", "--c12", "0.2", "--out", &out]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("appendix_a.json")).unwrap()).unwrap();
    assert!(v["closed_form_residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn validate_is_deterministic_and_reports_failures() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = weakshift(&["validate", "--out", d1.path().to_str().unwrap()]);
    let b = weakshift(&["validate", "--out", d2.path().to_str().unwrap()]);
    assert_eq!(a.status.code(), b.status.code());
    for f in ["validation_summary.csv", "validation_summary.json", "bundled_reports.csv", "bundled_reports.json"] {
        let x = std::fs::read(d1.path().join(f)).unwrap();
        let y = std::fs::read(d2.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d1.path().join("validation_summary.json")).unwrap()).unwrap();
    let criteria = summary["criteria"].as_array().unwrap();
    let all = criteria.iter().all(|c| c["passed"] == true);
    assert_eq!(a.status.code(), Some(if all { 0 } else { 1 }));
}

#[test]
fn flipped_convention_fails_validation() {
    let o = weakshift(&["validate", "--flip-convention"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    let calibration = text.lines().find(|l| l.contains("sign convention calibration")).unwrap();
    assert!(calibration.contains("FAIL"), "{calibration}");
}
