//! Runs the `iqc` binary end to end on the bundled example configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bundled_config() -> Value {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// The bundled configuration with a short simulation budget.
fn quick_config(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v = bundled_config();
    v["sim"]["n_random_runs"] = 4.into();
    v["sim"]["horizon"] = 10.0.into();
    edit(&mut v);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn iqc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iqc")).arg("--out").arg(out).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_then_verify() {
    let dir = TempDir::new().unwrap();
    let cfg = quick_config(dir.path(), |_| {});
    let o = iqc(dir.path(), &["analyze", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let certs = read_json(&dir.path().join("certificates.json"));
    let bundles = certs["bundles"].as_array().unwrap();
    assert_eq!(bundles.len(), 4);
    let traces: Vec<f64> = bundles.iter().map(|b| b["trace_y"].as_f64().unwrap()).collect();
    assert!(traces.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{traces:?}");
    assert!((traces[0] - 114.161227).abs() < 1e-3, "{traces:?}");
    for nu in 0..4 {
        let csv = std::fs::read_to_string(dir.path().join(format!("ellipse_nu{nu}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("theta,e1,e2"));
        assert_eq!(lines.count(), 256);
    }

    let certs_path = dir.path().join("certificates.json");
    let o = iqc(dir.path(), &["verify", s(&cfg), s(&certs_path)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_json(&dir.path().join("verify_report.json"));
    assert_eq!(report["passed"], Value::Bool(true));

    // Shrinking Y makes the ellipsoid too small to contain the worst-case
    // trajectories.
    let mut bad = certs.clone();
    for b in bad["bundles"].as_array_mut().unwrap() {
        for row in b["y"].as_array_mut().unwrap() {
            for v in row.as_array_mut().unwrap() {
                *v = (v.as_f64().unwrap() * 0.5).into();
            }
        }
    }
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, bad.to_string()).unwrap();
    let o = iqc(dir.path(), &["verify", s(&cfg), s(&bad_path)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("containment"), "{}", stderr(&o));
    let report = read_json(&dir.path().join("verify_report.json"));
    assert_eq!(report["passed"], Value::Bool(false));

    // Factorization from the solved multipliers.
    let o = iqc(dir.path(), &["factorize", s(&cfg), "--certificates", s(&certs_path)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fact = read_json(&dir.path().join("factorization.json"));
    for f in fact["factorizations"].as_array().unwrap() {
        assert!(f["relative_residual"].as_f64().unwrap() <= 1e-8, "{f}");
        assert!(f["grid_deviation"].as_f64().unwrap() <= 1e-6, "{f}");
    }
}

#[test]
fn empty_or_garbled_certificates_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = quick_config(dir.path(), |_| {});
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&iqc(dir.path(), &["verify", s(&cfg), s(&empty)])), 1);
    let none = dir.path().join("none.json");
    std::fs::write(&none, r#"{"delta": {"min": -0.6, "max": 5.0}, "bundles": []}"#).unwrap();
    assert_eq!(code(&iqc(dir.path(), &["verify", s(&cfg), s(&none)])), 1);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&iqc(dir.path(), &["verify", s(&cfg), s(&missing)])), 1);
}

#[test]
fn malformed_plant_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = quick_config(dir.path(), |v| {
        v["plant"]["c_z"] = serde_json::json!([[0.0, -0.36, 0.36]]);
    });
    let o = iqc(dir.path(), &["analyze", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("plant.c_z"), "{}", stderr(&o));
    assert!(!dir.path().join("certificates.json").exists());

    let cfg = quick_config(dir.path(), |v| {
        v["solver"]["tolerance"] = 1.0.into();
    });
    let o = iqc(dir.path(), &["analyze", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("solver.tolerance"), "{}", stderr(&o));
}

#[test]
fn single_basis_length_writes_one_ellipse() {
    let dir = TempDir::new().unwrap();
    let cfg = quick_config(dir.path(), |v| v["nu_list"] = serde_json::json!([0]));
    let o = iqc(dir.path(), &["analyze", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ellipses: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.starts_with("ellipse_"))
        .collect();
    assert_eq!(ellipses, vec!["ellipse_nu0.csv".to_string()]);
}

#[test]
fn infeasible_interval_exits_two() {
    // The loop is unstable at delta = -0.8, so no certificate exists.
    let dir = TempDir::new().unwrap();
    let cfg = quick_config(dir.path(), |v| {
        v["delta"] = serde_json::json!({"min": -0.85, "max": 5.0});
        v["nu_list"] = serde_json::json!([0]);
    });
    let o = iqc(dir.path(), &["analyze", s(&cfg)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"), "{}", stderr(&o));
}

#[test]
fn simulate_checks_delta_and_zero_input() {
    let dir = TempDir::new().unwrap();
    let cfg = quick_config(dir.path(), |_| {});
    let o = iqc(dir.path(), &["simulate", s(&cfg), "--delta", "6"]);
    assert_eq!(code(&o), 1);

    let o = iqc(dir.path(), &["simulate", s(&cfg), "--delta", "-0.3", "--zero-disturbance", "--horizon", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let path = String::from_utf8(o.stdout).unwrap();
    let csv = std::fs::read_to_string(path.trim()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,d,z,w,e1,e2,energy"));
    let mut rows = 0;
    for line in lines {
        let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!(vals[1..].iter().all(|v| *v == 0.0), "{line}");
        rows += 1;
    }
    assert_eq!(rows, 2001);

    let o = iqc(dir.path(), &["simulate", s(&cfg), "--delta", "-0.6", "--direction-angle", "-1.2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(String::from_utf8(o.stdout).unwrap().trim()).unwrap();
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[6] - 1.0).abs() < 1e-9, "unit energy, got {}", last[6]);
}

#[test]
fn factorize_from_inline_multiplier() {
    let dir = TempDir::new().unwrap();
    // A positive-real-like multiplier for nu = 1.
    let cfg = quick_config(dir.path(), |v| v["inline_p"] = serde_json::json!([[1.0, 0.2], [0.3, 0.5]]));
    let o = iqc(dir.path(), &["factorize", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fact = read_json(&dir.path().join("factorization.json"));
    let f = &fact["factorizations"][0];
    assert_eq!(f["nu"], 1);
    assert!(f["relative_residual"].as_f64().unwrap() <= 1e-8, "{f}");

    let cfg = quick_config(dir.path(), |v| v["inline_p"] = serde_json::json!([[0.0, 0.0], [0.0, 0.0]]));
    let o = iqc(dir.path(), &["factorize", s(&cfg)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    let cfg = quick_config(dir.path(), |_| {});
    assert_eq!(code(&iqc(dir.path(), &["factorize", s(&cfg)])), 1);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = quick_config(dir.path(), |v| v["nu_list"] = serde_json::json!([1, 2]));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(code(&iqc(out, &["analyze", s(&cfg)])), 0);
        let certs = out.join("certificates.json");
        assert_eq!(code(&iqc(out, &["verify", s(&cfg), s(&certs)])), 0);
    }
    for name in ["certificates.json", "ellipse_nu1.csv", "ellipse_nu2.csv", "verify_report.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}
