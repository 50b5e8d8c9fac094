use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kyleback(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kyleback"))
        .current_dir(dir)
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_rows(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect()
}

const UNIFORM: &str = r#"{"belief": {"kind": "uniform", "a": 10, "b": 20}}"#;

#[test]
fn default_fixed_point_recovers_gaussian_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = kyleback(dir.path(), &["fixed-point", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    let rows: Vec<Vec<f64>> = read_rows(&o.join("g_star.csv")).into_iter().filter(|r| r[0].abs() <= 2.0).collect();
    let n = rows.len() as f64;
    let mx = rows.iter().map(|r| r[0]).sum::<f64>() / n;
    let my = rows.iter().map(|r| r[1]).sum::<f64>() / n;
    let slope = rows.iter().map(|r| (r[0] - mx) * (r[1] - my)).sum::<f64>()
        / rows.iter().map(|r| (r[0] - mx).powi(2)).sum::<f64>();
    assert!((slope - 1.9506249).abs() / 1.9506249 < 5e-3);
    assert!((my - slope * mx - 1.0).abs() < 5e-3);
    let resolved = read_json(&o.join("config.resolved.json"));
    assert_eq!(resolved["model"]["gamma"], 0.1);
    assert_eq!(resolved["model"]["l_cap"], 4.0);
    assert_eq!(resolved["grids"]["xi_halfwidth"], 4.0);
    assert!(o.join("residuals.csv").exists() && o.join("mu_density.csv").exists());
    // Header plus 12+ significant digits in every cell.
    let text = std::fs::read_to_string(o.join("g_star.csv")).unwrap();
    assert!(text.starts_with("xi,g\n"));
    assert!(text.lines().nth(1).unwrap().split(',').all(|c| c.contains("e") && c.len() >= 20));
}

#[test]
fn budget_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"model": {"gamma": 1.0, "l_cap": 4.0}}"#);
    let out = kyleback(dir.path(), &["fixed-point", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn slope_breach_exits_3_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"model": {"l_cap": 1.0}, "outputs": {"dir": "o"}}"#);
    let out = kyleback(dir.path(), &["fixed-point", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("o/g_checkpoint.csv").exists());
}

#[test]
fn iteration_cap_exits_2_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"fixed_point": {"max_iter": 1, "tol": 1e-14}, "outputs": {"dir": "o"}}"#);
    let out = kyleback(dir.path(), &["fixed-point", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("o/g_star.csv").exists());
    assert_eq!(read_json(&dir.path().join("o/fixed_point_summary.json"))["converged"], false);
}

#[test]
fn missing_potential_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["pde", "report", "simulate"] {
        let out = kyleback(dir.path(), &[cmd, "--out", "empty"]);
        assert_eq!(out.status.code(), Some(4), "{cmd}");
    }
}

#[test]
fn invalid_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"model": {"gama": 0.1}}"#);
    assert_eq!(kyleback(dir.path(), &["fixed-point", "--config", &cfg]).status.code(), Some(1));
    let cfg = write_config(dir.path(), r#"{"belief": {"kind": "uniform", "a": 3, "b": 1}}"#);
    assert_eq!(kyleback(dir.path(), &["fixed-point", "--config", &cfg]).status.code(), Some(1));
    assert_eq!(kyleback(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(kyleback(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn uniform_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), UNIFORM);
    let out = kyleback(dir.path(), &["fixed-point", "--config", &cfg, "--out", "o"]);
    assert_eq!(out.status.code(), Some(0));
    let out = kyleback(dir.path(), &["report", "--config", &cfg, "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    let summary = read_json(&o.join("report_summary.json"));
    let probes = summary["probes"].as_array().unwrap();
    assert_eq!(probes.len(), 7);
    assert!(probes[0]["prior_distance"].as_f64().unwrap() < 2e-2);
    for f in ["surface_R.csv", "surface_P.csv", "surface_Gamma.csv", "surface_Chi.csv", "impact_depth.csv"] {
        assert!(o.join(f).exists(), "{f}");
    }
    let rows = read_rows(&o.join("conditional_cdf_t0_xi0.csv"));
    for r in rows.iter().step_by(50) {
        assert!((r[1] - r[2]).abs() < 2e-2);
    }
    let refuse = write_config(
        dir.path(),
        r#"{"belief": {"kind": "uniform", "a": 10, "b": 20}, "report": {"probes": [[1.0, 0.0]]}}"#,
    );
    let out = kyleback(dir.path(), &["report", "--config", &refuse, "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("point mass"));
}

#[test]
fn gaussian_depth_drift_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kyleback(dir.path(), &["fixed-point", "--out", "o"]).status.code(), Some(0));
    assert_eq!(kyleback(dir.path(), &["report", "--out", "o"]).status.code(), Some(0));
    for r in read_rows(&dir.path().join("o/impact_depth.csv")) {
        if r[1].abs() <= 1.0 {
            assert!((r[5] - 0.025).abs() < 1e-4, "depth drift {} at t={} xi={}", r[5], r[0], r[1]);
        }
    }
}

#[test]
fn simulation_gates_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), UNIFORM);
    assert_eq!(kyleback(dir.path(), &["fixed-point", "--config", &cfg, "--out", "o"]).status.code(), Some(0));
    let run = || {
        let out = kyleback(dir.path(), &["simulate", "--config", &cfg, "--out", "o", "--seed", "0"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join("o/simulation_summary.json")).unwrap()
    };
    let first = run();
    assert_eq!(first, run());
    let summary: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(summary["seed"], 0);
    assert!(summary["gates"].as_array().unwrap().iter().all(|g| g["pass"] == true));

    let out = kyleback(dir.path(), &["simulate", "--config", &cfg, "--out", "o", "--paths", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let small = read_json(&dir.path().join("o/simulation_summary.json"));
    assert!(small["gates"].is_null());
    assert!(small["note"].as_str().unwrap().contains("insufficient sample"));
}

#[test]
fn strict_gate_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"belief": {"kind": "uniform", "a": 10, "b": 20}, "simulate": {"n_paths": 2000, "min_paths": 100, "max_abs_z": 0.0}}"#,
    );
    assert_eq!(kyleback(dir.path(), &["fixed-point", "--config", &cfg, "--out", "o"]).status.code(), Some(0));
    let out = kyleback(dir.path(), &["simulate", "--config", &cfg, "--out", "o"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("martingale_max_abs_z"));
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write_config(dir.path(), r#"{"belief": {"kind": "uniform", "a": 10, "b": 20}, "simulate": {"n_paths": 500}}"#);
    let snapshot = |d: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    assert_eq!(kyleback(dir.path(), &["all", "--config", &cfg, "--out", "o"]).status.code(), Some(0));
    let first = snapshot(&dir.path().join("o"));
    assert_eq!(kyleback(dir.path(), &["all", "--config", &cfg, "--out", "o"]).status.code(), Some(0));
    assert_eq!(first, snapshot(&dir.path().join("o")));
}
