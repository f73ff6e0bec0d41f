//! Artifact writers. Every writer produces a `String` so output is easy to
//! test and byte-identical between runs; [`write_file`] puts it on disk.

pub mod svg;
pub mod vtk;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::point_driver::TraceRow;

pub use svg::{Plot, Series};

/// Column names of a point trace, in file order.
pub const TRACE_COLUMNS: [&str; 36] = [
    "step", "segment", "s11", "s22", "s33", "s23", "s13", "s12", "E1", "E2", "E3", "P1", "P2", "P3", "lambda_P", "lambda_S",
    "eps11", "eps22", "eps33", "eps23", "eps13", "eps12", "D1", "D2", "D3", "Ehat1", "Ehat2", "Ehat3", "f_P", "dissipation",
    "cumulative_dissipation", "newton_iterations", "active_loops", "abs_P", "P_over_Psat", "strain_shear_convention",
];

const TRACE_UNITS: &str = "# units: stress Pa; E, Ehat, f_P, lambda_S V/m; P, D, lambda_P C/m^2; eps engineering shears; \
dissipation J/m^3; strain_shear_convention 1 = engineering";

fn push_row(out: &mut String, values: &[String]) {
    out.push_str(&values.join(","));
    out.push('\n');
}

/// Trace as CSV: a units comment, the header and one row per step.
pub fn trace_csv(trace: &[TraceRow], saturation_polarization: f64) -> String {
    let mut out = String::new();
    out.push_str(TRACE_UNITS);
    out.push('\n');
    out.push_str(&TRACE_COLUMNS.join(","));
    out.push('\n');
    for r in trace {
        let mut v: Vec<String> = vec![r.step.to_string(), r.segment.to_string()];
        v.extend(r.stress.0.iter().map(f64::to_string));
        v.extend(r.field.iter().map(f64::to_string));
        v.extend(r.pol.iter().map(f64::to_string));
        v.push(r.lambda_p.to_string());
        v.push(r.lambda_s.to_string());
        v.extend(r.strain.0.iter().map(f64::to_string));
        v.extend(r.displacement.iter().map(f64::to_string));
        v.extend(r.driving_force.iter().map(f64::to_string));
        v.push(r.switching.to_string());
        v.push(r.dissipation.to_string());
        v.push(r.cumulative_dissipation.to_string());
        v.push(r.newton_iterations.to_string());
        v.push(r.active_loops.to_string());
        v.push(r.pol.norm().to_string());
        v.push((r.pol.norm() / saturation_polarization).to_string());
        v.push("1".into());
        push_row(&mut out, &v);
    }
    out
}

/// Generic numeric table with a units comment line.
pub fn table_csv(units: &str, columns: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = format!("# units: {units}\n");
    out.push_str(&columns.join(","));
    out.push('\n');
    for r in rows {
        push_row(&mut out, &r.iter().map(f64::to_string).collect::<Vec<_>>());
    }
    out
}

/// JSON object with keys in sorted order.
pub fn summary_json(values: &BTreeMap<String, serde_json::Value>) -> String {
    let mut s = serde_json::to_string_pretty(values).expect("summary values serialize");
    s.push('\n');
    s
}

/// Flat `key = value` report, one line per entry, in the given order.
pub fn key_value_report(entries: &[(String, f64)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// Parses a report written by [`key_value_report`].
pub fn parse_key_value_report(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .filter_map(|line| {
            let (k, v) = line.split_once('=')?;
            Some((k.trim().to_string(), v.trim().parse().ok()?))
        })
        .collect()
}

pub fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::MaterialParams;
    use crate::point_driver::{build_scenario, run_program, Scenario};
    use crate::vi_solver::SolverSettings;

    #[test]
    fn trace_csv_has_fixed_columns() {
        let p = MaterialParams::table1();
        let prog = build_scenario(Scenario::Hysteresis, &p, 5).unwrap();
        let trace = run_program(&prog, &p, &SolverSettings::for_material(&p)).unwrap();
        let csv = trace_csv(&trace, p.saturation_polarization);
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# units:"));
        assert_eq!(lines.next().unwrap().split(',').count(), TRACE_COLUMNS.len());
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), trace.len());
        for r in rows {
            let cells: Vec<f64> = r.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(cells.len(), TRACE_COLUMNS.len());
            assert!(cells.iter().all(|c| c.is_finite()));
        }
        assert_eq!(csv, trace_csv(&trace, p.saturation_polarization));
    }

    #[test]
    fn empty_trace_is_header_only() {
        let csv = trace_csv(&[], 0.3);
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn summary_keys_sorted() {
        let mut m = BTreeMap::new();
        m.insert("zeta".to_string(), serde_json::json!(1.0));
        m.insert("alpha".to_string(), serde_json::json!("x"));
        let s = summary_json(&m);
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
    }

    #[test]
    fn report_round_trips() {
        let entries = vec![("min_PI_over_Psat".to_string(), 0.5485), ("steps".to_string(), 20.0), ("tiny".to_string(), -1.25e-7)];
        assert_eq!(parse_key_value_report(&key_value_report(&entries)), entries);
    }
}
