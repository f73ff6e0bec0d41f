use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ferrovi::io::TRACE_COLUMNS;
use ferrovi::point_driver::{build_scenario, hysteresis_landmarks, oracle_1d, Scenario};
use ferrovi::MaterialParams;

fn scratch_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn ferrovi(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ferrovi")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn hysteresis_summary_matches_uniaxial_reference() {
    let dir = scratch_dir("hysteresis");
    let out = ferrovi(&["hysteresis", "--preset", "table1", "--steps", "50"], &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let p = MaterialParams::table1();
    let reference = oracle_1d(&build_scenario(Scenario::Hysteresis, &p, 50).unwrap(), &p).unwrap();
    let expected = hysteresis_landmarks(&reference, &p).unwrap();
    let s = summary(&dir);
    let remanent = s["remanent_D"].as_f64().unwrap();
    assert!((remanent - expected.remanent_d).abs() <= 1e-6 * expected.remanent_d.abs());
    assert!((remanent - 0.3).abs() < 1e-9);
    assert_eq!(s["coercive_crossings_V_per_m"].as_array().unwrap().len(), 2);

    let csv = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    assert_eq!(lines.next().unwrap().split(',').count(), TRACE_COLUMNS.len());
    for line in lines {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), TRACE_COLUMNS.len());
        assert!(cells.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn artifacts_are_deterministic() {
    let a = scratch_dir("det_a");
    let b = scratch_dir("det_b");
    for dir in [&a, &b] {
        let out = ferrovi(&["mech-depol", "--steps", "20", "--plot"], dir);
        assert!(out.status.success());
    }
    for name in ["trace.csv", "summary.json", "report.txt", "depolarization.svg"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn empty_custom_program_gives_header_only_trace() {
    let dir = scratch_dir("custom_empty");
    let prog = dir.join("program.json");
    std::fs::write(&prog, "{}").unwrap();
    let out = ferrovi(&["custom", "--program", prog.to_str().unwrap()], &dir);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().next().unwrap().starts_with("# units:"));
}

#[test]
fn exit_codes_separate_config_errors_from_solver_failures() {
    let dir = scratch_dir("exit_codes");
    let out = ferrovi(&["hysteresis", "--preset", "table9"], &dir);
    assert_eq!(out.status.code(), Some(2));
    let out = ferrovi(&["custom"], &dir);
    assert_eq!(out.status.code(), Some(2));
    let out = ferrovi(&["hysteresis", "--max-loops", "1"], &dir);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("at step 101"), "{msg}");
}

#[test]
fn nonprop_reports_every_angle() {
    let dir = scratch_dir("nonprop");
    let out = ferrovi(&["nonprop", "--angle", "0,180", "--steps", "20", "--plot"], &dir);
    assert!(out.status.success());
    let s = summary(&dir);
    assert!(s["final_delta_D_over_Psat_0"].as_f64().unwrap().abs() < 1e-9);
    assert!((s["final_delta_D_over_Psat_180"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!(dir.join("trace_angle_180.csv").exists());
    assert!(dir.join("delta_D_E.svg").exists());
}

#[test]
fn beam_summary_reports_minimum_polarization() {
    let dir = scratch_dir("beam");
    let out = ferrovi(&["beam"], &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir);
    assert!(s["min_PI_over_Psat"].is_number());
    assert!(std::fs::read_to_string(dir.join("fields.vtk")).unwrap().starts_with("# vtk DataFile"));
    assert!(std::fs::read_to_string(dir.join("report.txt")).unwrap().contains("min_PI_over_Psat = "));
}
