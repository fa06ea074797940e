use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{sub}.toml"));
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_nvortex"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn artifact(dir: &Path, name: &str) -> PathBuf {
    dir.join("out").join(name)
}

fn report(dir: &Path, name: &str) -> Value {
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(artifact(dir, name)).unwrap()).unwrap();
    assert_eq!(v["header"]["tool"], "nvortex");
    assert_eq!(v["header"]["config_sha256"].as_str().unwrap().len(), 64);
    v["report"].clone()
}

/// Data rows of a CSV artifact, comment lines and header skipped.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

const DIPOLE: &str = r#"
vorticities = [1.0, 1.0]
[initial]
points = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]
[integrator]
dt = 0.01
[simulate]
t_end = 2.0
"#;

#[test]
fn antipodal_dipole_stays_fixed() {
    let dir = TempDir::new().unwrap();
    ok(&run(dir.path(), "simulate", DIPOLE, &[]));
    let path = artifact(dir.path(), "simulate.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# nvortex "));
    assert!(text.lines().nth(1).unwrap().starts_with("# config_sha256 "));
    let data = rows(&path);
    assert_eq!(data.len(), 201);
    for r in &data {
        for (c, want) in [(1, 0.0), (2, 0.0), (3, 1.0), (4, 0.0), (5, 0.0), (6, -1.0)] {
            assert!((r[c] - want).abs() < 1e-12, "column {c}: {}", r[c]);
        }
    }
}

#[test]
fn identical_triple_is_thin_and_nondegenerate() {
    let dir = TempDir::new().unwrap();
    ok(&run(
        dir.path(),
        "vorticity-report",
        "vorticities = [1.0, 1.0, 1.0]\n",
        &[],
    ));
    let r = report(dir.path(), "vorticity_report.json");
    assert_eq!(r["thin"], serde_json::json!([true, true, true]));
    assert_eq!(r["p1"]["non_degenerate"], true);
    assert_eq!(r["kappa"].as_f64().unwrap(), 1.0);
    assert!((r["minimal_action"].as_f64().unwrap() - 4.0 * std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn round_spectrum() {
    let dir = TempDir::new().unwrap();
    ok(&run(dir.path(), "spectrum", "[spectrum]\nk = 9\n", &[]));
    let r = report(dir.path(), "spectrum.json");
    let ev: Vec<f64> = r["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let want = [0.0, 2.0, 2.0, 2.0, 6.0, 6.0, 6.0, 6.0, 6.0];
    assert_eq!(ev.len(), 9);
    for (a, b) in ev.iter().zip(want) {
        assert!((a - b).abs() < 1e-10, "{ev:?}");
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let cfg = r#"
seed = 7
vorticities = [1.0, 2.0, 3.0]
[metric.random]
l_max = 3
amplitude = 0.1
[initial.random]
[integrator]
dt = 0.01
[simulate]
t_end = 1.0
[fixed_points]
starts = 8
"#;
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for sub in ["simulate", "fixed-points"] {
        ok(&run(a.path(), sub, cfg, &[]));
        ok(&run(b.path(), sub, cfg, &[]));
    }
    for name in ["simulate.csv", "fixed_points.json"] {
        let x = std::fs::read(artifact(a.path(), name)).unwrap();
        let y = std::fs::read(artifact(b.path(), name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn unknown_field_is_rejected() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        "simulate",
        "vorticities = [1.0]\n[integrator]\nstep = 0.1\n",
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
}

#[test]
fn conflicting_metric_sources_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = "[metric]\ncoefficients = [[1, 0, 0.1]]\nrandom = { l_max = 2, amplitude = 0.1 }\n";
    let out = run(dir.path(), "spectrum", cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metric:"));
}

#[test]
fn point_count_must_match_vorticities() {
    let dir = TempDir::new().unwrap();
    let cfg =
        "vorticities = [1.0, 1.0, 1.0]\n[initial]\npoints = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]\n";
    let out = run(dir.path(), "simulate", cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("initial:"));
}

#[test]
fn truncated_trajectory_exits_with_status() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
vorticities = [1.0, 2.0]
[initial]
angles = [[0.5, 0.0], [1.5, 1.0]]
[integrator]
dt = 0.1
newton_tol = 1e-300
max_newton_iters = 1
"#;
    let out = run(dir.path(), "simulate", cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    let text = std::fs::read_to_string(artifact(dir.path(), "simulate.csv")).unwrap();
    assert!(text.contains("newton_failure"));
}

#[test]
fn plot_renders_trajectory() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
vorticities = [1.0, 1.0, 1.0]
[initial]
angles = [[1.0, 0.0], [1.0, 2.0943951023931953], [1.0, 4.1887902047863905]]
[integrator]
dt = 0.05
[simulate]
t_end = 20.0
[plot]
input = "out/simulate.csv"
size = 320
"#;
    ok(&run(dir.path(), "simulate", cfg, &[]));
    ok(&run(dir.path(), "plot", cfg, &[]));
    let svg = std::fs::read_to_string(artifact(dir.path(), "plot.svg")).unwrap();
    assert!(svg.contains("<!-- nvortex "));
    assert!(svg.contains("config_sha256"));
    assert_eq!(svg.matches("r=\"4\"").count(), 3);
    assert!(svg.contains("<polyline"));
    assert!(svg.trim_end().ends_with("</svg>"));
}

#[test]
fn plot_needs_an_input() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "plot", "", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("plot.input"));
}

#[test]
fn ring_orbit_is_a_choreography() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
vorticities = [1.0, 1.0, 1.0]
[initial]
angles = [[1.0, 0.0], [1.0, 2.0943951023931953], [1.0, 4.1887902047863905]]
[orbit]
dt = 5e-3
samples = 32
"#;
    ok(&run(dir.path(), "orbit", cfg, &[]));
    let r = report(dir.path(), "orbit.json");
    assert!(r["orbit"]["residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(r["choreography"]["is_choreography"], true);
    assert!(r["perverse"].is_null());
    let path = artifact(dir.path(), "orbit.csv");
    let head = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .nth(3)
        .unwrap()
        .to_string();
    let json: Value = serde_json::from_str(head.trim_start_matches("# ")).unwrap();
    assert!(json["T"].as_f64().unwrap() > 0.0);
    assert_eq!(rows(&path).len(), 33);
}

#[test]
fn energy_band_writes_scan_and_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
vorticities = [1.0, 1.0]
[metric]
coefficients = [[2, 0, 0.1]]
[energy_band]
grid_size = 40
starts = 4
polish = false
levels = [-10.0]
"#;
    ok(&run(dir.path(), "energy-band", cfg, &[]));
    assert_eq!(rows(&artifact(dir.path(), "energy_band.csv")).len(), 40);
    let r = report(dir.path(), "energy_band.json");
    assert!(r["c1"].as_f64().unwrap() <= r["c2"].as_f64().unwrap());
    assert_eq!(r["separations"][0]["vacuous"], true);
}

#[test]
fn contact_report_on_round_dipole() {
    let dir = TempDir::new().unwrap();
    let cfg = "[contact]\nlevels = [0.2]\nsamples = 50\nlie_samples = 2\n";
    ok(&run(dir.path(), "contact", cfg, &[]));
    let r = report(dir.path(), "contact.json");
    assert!(r["transversality"][0]["min_margin"].as_f64().unwrap() > 0.0);
    let rows = r["liouville"]["rows"].as_array().unwrap();
    let last = rows.last().unwrap()["ratio"].as_f64().unwrap();
    assert!((last - 1.0).abs() < 1e-3);
    assert!(r["deformed"].is_null());
}
