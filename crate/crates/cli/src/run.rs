use std::collections::BTreeMap;
use std::path::PathBuf;

use ferrovi::fem::benchmark::{run_benchmark_with, Benchmark, BenchmarkConfig, BenchmarkOutcome};
use ferrovi::fem::FeSettings;
use ferrovi::io::{self, Plot, Series};
use ferrovi::point_driver::{
    build_scenario, extrapolated_onset, hysteresis_landmarks, oracle_depolarization_onset, run_program, LoadProgram, Scenario,
    TraceRow, DEFAULT_STEPS_PER_EC,
};
use ferrovi::vi_solver::SolverSettings;
use ferrovi::{Error, MaterialParams, Result};
use serde_json::{json, Value};

use crate::{Command, Options};

const DEFAULT_ANGLES: [f64; 5] = [0.0, 45.0, 90.0, 135.0, 180.0];

/// Files written so far, in creation order.
struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &PathBuf) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Artifacts { dir: dir.clone(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        io::write_file(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    fn summary(&mut self, summary: &BTreeMap<String, Value>) -> Result<()> {
        self.write("summary.json", &io::summary_json(summary))?;
        let scalars: Vec<(String, f64)> = summary.iter().filter_map(|(k, v)| Some((k.clone(), v.as_f64()?))).collect();
        self.write("report.txt", &io::key_value_report(&scalars))
    }
}

fn material(opts: &Options, default: &str) -> Result<MaterialParams> {
    match (&opts.material, &opts.preset) {
        (Some(path), _) => MaterialParams::from_file(path),
        (None, Some(name)) => MaterialParams::preset(name),
        (None, None) => MaterialParams::preset(default),
    }
}

fn material_label(opts: &Options, default: &str) -> String {
    match (&opts.material, &opts.preset) {
        (Some(path), _) => path.display().to_string(),
        (None, Some(name)) => name.clone(),
        (None, None) => default.to_string(),
    }
}

fn point_settings(opts: &Options, p: &MaterialParams) -> Result<SolverSettings> {
    let mut s = SolverSettings::for_material(p);
    if let Some(tol) = opts.tol {
        s.newton_tol = tol;
    }
    if let Some(n) = opts.max_loops {
        s.max_active_loops = n;
    }
    s.validate()?;
    Ok(s)
}

fn counters(summary: &mut BTreeMap<String, Value>, trace: &[TraceRow]) {
    summary.insert("steps".into(), json!(trace.len()));
    summary.insert("max_active_loops".into(), json!(trace.iter().map(|r| r.active_loops).max().unwrap_or(0)));
    summary.insert("newton_iterations".into(), json!(trace.iter().map(|r| r.newton_iterations).sum::<usize>()));
    summary.insert("total_dissipation_J_per_m3".into(), json!(trace.last().map_or(0.0, |r| r.cumulative_dissipation)));
    if let Some(last) = trace.last() {
        summary.insert("final_P3".into(), json!(last.pol[2]));
    }
}

fn curve(trace: &[TraceRow], x: impl Fn(&TraceRow) -> f64, y: impl Fn(&TraceRow) -> f64) -> Vec<(f64, f64)> {
    trace.iter().map(|r| (x(r), y(r))).collect()
}

pub fn run(command: Command, opts: &Options) -> Result<Vec<PathBuf>> {
    if opts.steps == Some(0) {
        return Err(Error::Config("--steps must be at least 1".into()));
    }
    let mut out = Artifacts::new(&opts.out)?;
    match command {
        Command::Hysteresis | Command::Butterfly => electric_loop(command, opts, &mut out)?,
        Command::MechDepol => mech_depol(opts, &mut out)?,
        Command::Nonprop => nonprop(opts, &mut out)?,
        Command::Custom => custom(opts, &mut out)?,
        Command::Beam => benchmark(Benchmark::Beam, opts, &mut out)?,
        Command::Bimorph => benchmark(Benchmark::Bimorph, opts, &mut out)?,
        Command::NonpropField => benchmark(Benchmark::NonpropField, opts, &mut out)?,
    }
    Ok(out.files)
}

fn electric_loop(command: Command, opts: &Options, out: &mut Artifacts) -> Result<()> {
    let p = material(opts, "table1")?;
    let s = point_settings(opts, &p)?;
    let prog = build_scenario(Scenario::Hysteresis, &p, opts.steps.unwrap_or(DEFAULT_STEPS_PER_EC))?;
    let trace = run_program(&prog, &p, &s)?;
    out.write("trace.csv", &io::trace_csv(&trace, p.saturation_polarization))?;

    let mut summary = BTreeMap::new();
    summary.insert("scenario".into(), json!(if command == Command::Butterfly { "butterfly" } else { "hysteresis" }));
    summary.insert("material".into(), json!(material_label(opts, "table1")));
    counters(&mut summary, &trace);
    if let Some(l) = hysteresis_landmarks(&trace, &p) {
        summary.insert("remanent_D".into(), json!(l.remanent_d));
        summary.insert("remanent_strain".into(), json!(l.remanent_strain));
        summary.insert("switching_onset_V_per_m".into(), json!(l.switching_onset));
        summary.insert("saturation_knee_V_per_m".into(), json!(l.saturation_knee));
        summary.insert("reverse_onset_V_per_m".into(), json!(l.reverse_onset));
        summary.insert("coercive_crossings_V_per_m".into(), json!(l.coercive_crossings));
    }
    final_ratio(&mut summary, &trace, &p);
    out.summary(&summary)?;

    if opts.plot {
        let e = |r: &TraceRow| r.field[2];
        let de = Plot::new("Dielectric hysteresis", "E3 [V/m]", "D3 [C/m^2]")
            .with_series(Series::new("D3", curve(&trace, e, |r| r.displacement[2])))
            .with_series(Series::new("P3 remanent", curve(&trace, e, |r| r.pol[2])));
        out.write("D_E.svg", &de.to_svg())?;
        let se = Plot::new("Butterfly", "E3 [V/m]", "eps33 [-]").with_series(Series::new("eps33", curve(&trace, e, |r| r.strain.0[2])));
        out.write("strain_E.svg", &se.to_svg())?;
    }
    Ok(())
}

fn final_ratio(summary: &mut BTreeMap<String, Value>, trace: &[TraceRow], p: &MaterialParams) {
    if let Some(last) = trace.last() {
        summary.insert("final_abs_P_over_Psat".into(), json!(last.pol.norm() / p.saturation_polarization));
    }
}

fn mech_depol(opts: &Options, out: &mut Artifacts) -> Result<()> {
    let p = material(opts, "table1")?;
    let s = point_settings(opts, &p)?;
    let prog = build_scenario(Scenario::MechDepol, &p, opts.steps.unwrap_or(DEFAULT_STEPS_PER_EC))?;
    let trace = run_program(&prog, &p, &s)?;
    out.write("trace.csv", &io::trace_csv(&trace, p.saturation_polarization))?;

    let mut summary = BTreeMap::new();
    summary.insert("scenario".into(), json!("mech_depol"));
    summary.insert("material".into(), json!(material_label(opts, "table1")));
    counters(&mut summary, &trace);
    final_ratio(&mut summary, &trace, &p);
    let ramp: Vec<TraceRow> = trace.iter().filter(|r| r.segment == 2).cloned().collect();
    let poled = trace.iter().rev().find(|r| r.segment == 1);
    if let Some(poled) = poled {
        summary.insert("remanent_D".into(), json!(poled.displacement[2]));
        if let Some(onset) = extrapolated_onset(&ramp, |r| r.stress.0[2], poled.pol) {
            summary.insert("depolarization_onset_Pa".into(), json!(onset));
        }
        if let Ok(onset) = oracle_depolarization_onset(&p, poled.pol[2], 0.0) {
            summary.insert("depolarization_onset_reference_Pa".into(), json!(onset));
        }
    }
    out.summary(&summary)?;

    if opts.plot {
        let s33 = |r: &TraceRow| r.stress.0[2];
        let plot = Plot::new("Mechanical depolarization", "sigma33 [Pa]", "[C/m^2]")
            .with_series(Series::new("P3 remanent", curve(&ramp, s33, |r| r.pol[2])))
            .with_series(Series::new("D3", curve(&ramp, s33, |r| r.displacement[2])));
        out.write("depolarization.svg", &plot.to_svg())?;
    }
    Ok(())
}

fn angle_tag(deg: f64) -> String {
    format!("{deg}").replace('-', "m").replace('.', "p")
}

fn nonprop(opts: &Options, out: &mut Artifacts) -> Result<()> {
    let p = material(opts, "table2")?;
    let s = point_settings(opts, &p)?;
    let angles: Vec<f64> = if opts.angle.is_empty() { DEFAULT_ANGLES.to_vec() } else { opts.angle.clone() };
    let mut summary = BTreeMap::new();
    summary.insert("scenario".into(), json!("nonprop"));
    summary.insert("material".into(), json!(material_label(opts, "table2")));
    summary.insert("angles_deg".into(), json!(angles));
    let mut plot = Plot::new("Non-proportional loading", "E3 [V/m]", "Delta D3 [C/m^2]");
    let mut max_loops = 0;
    for &deg in &angles {
        if !deg.is_finite() {
            return Err(Error::Config("angles must be finite".into()));
        }
        let prog = build_scenario(Scenario::NonProp(deg), &p, opts.steps.unwrap_or(DEFAULT_STEPS_PER_EC))?;
        let trace = run_program(&prog, &p, &s)?;
        let tag = angle_tag(deg);
        out.write(&format!("trace_angle_{tag}.csv"), &io::trace_csv(&trace, p.saturation_polarization))?;
        let d0 = prog.initial_state.pol[2];
        let delta: Vec<(f64, f64)> = curve(&trace, |r| r.field[2], |r| r.displacement[2] - d0);
        if let Some(last) = delta.last() {
            summary.insert(format!("final_delta_D_over_Psat_{tag}"), json!(last.1 / p.saturation_polarization));
        }
        if let Some(peak) = trace.iter().filter(|r| r.segment == 0).last() {
            summary.insert(format!("peak_delta_D_over_Psat_{tag}"), json!((peak.displacement[2] - d0) / p.saturation_polarization));
        }
        max_loops = max_loops.max(trace.iter().map(|r| r.active_loops).max().unwrap_or(0));
        plot = plot.with_series(Series::new(format!("{deg} deg"), delta));
    }
    summary.insert("max_active_loops".into(), json!(max_loops));
    out.summary(&summary)?;
    if opts.plot {
        out.write("delta_D_E.svg", &plot.to_svg())?;
    }
    Ok(())
}

fn custom(opts: &Options, out: &mut Artifacts) -> Result<()> {
    let path = opts.program.as_ref().ok_or_else(|| Error::Config("custom needs --program <file>".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let prog: LoadProgram = serde_json::from_str(&text)?;
    let p = material(opts, "table1")?;
    let s = point_settings(opts, &p)?;
    let trace = run_program(&prog, &p, &s)?;
    out.write("trace.csv", &io::trace_csv(&trace, p.saturation_polarization))?;

    let mut summary = BTreeMap::new();
    summary.insert("scenario".into(), json!("custom"));
    summary.insert("material".into(), json!(material_label(opts, "table1")));
    counters(&mut summary, &trace);
    final_ratio(&mut summary, &trace, &p);
    out.summary(&summary)?;
    if opts.plot {
        let plot = Plot::new("Custom program", "step", "[C/m^2]")
            .with_series(Series::new("P3 remanent", curve(&trace, |r| r.step as f64, |r| r.pol[2])))
            .with_series(Series::new("D3", curve(&trace, |r| r.step as f64, |r| r.displacement[2])));
        out.write("custom.svg", &plot.to_svg())?;
    }
    Ok(())
}

fn benchmark(kind: Benchmark, opts: &Options, out: &mut Artifacts) -> Result<()> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            BenchmarkConfig::from_json_str(kind, &text)?
        }
        None => BenchmarkConfig::defaults(kind),
    };
    if let Some(n) = opts.steps {
        cfg.load_steps = n;
    }
    if let Some(name) = &opts.preset {
        cfg.preset = name.clone();
    }
    let angles: Vec<f64> = if kind == Benchmark::NonpropField { opts.angle.clone() } else { Vec::new() };
    if angles.len() > 1 {
        return Err(Error::Config("nonprop-field takes a single --angle".into()));
    }
    if let Some(a) = angles.first() {
        cfg.angle_deg = *a;
    }
    let p = material(opts, &cfg.preset)?;
    let mut settings = FeSettings::for_material(&p);
    if let Some(tol) = opts.tol {
        settings.residual_tol = tol;
    }
    if let Some(n) = opts.max_loops {
        settings.local.max_active_loops = n;
    }
    let outcome = run_benchmark_with(kind, &cfg, p, settings)?;
    write_benchmark(kind, opts, &cfg, &outcome, out)
}

fn write_benchmark(kind: Benchmark, opts: &Options, cfg: &BenchmarkConfig, outcome: &BenchmarkOutcome, out: &mut Artifacts) -> Result<()> {
    out.write("history.csv", &io::table_csv("SI, as in the column names", &outcome.history_columns, &outcome.history))?;
    out.write("fields.vtk", &io::vtk::model_to_vtk(&outcome.model, &format!("ferrovi {kind}")))?;
    let mut summary: BTreeMap<String, Value> = outcome.report.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    summary.insert("benchmark".into(), json!(kind.to_string()));
    summary.insert("material".into(), json!(material_label(opts, &cfg.preset)));
    summary.insert("config".into(), serde_json::to_value(cfg)?);
    out.summary(&summary)?;
    if opts.plot && outcome.history_columns.len() > 1 {
        let x = &outcome.history_columns[0];
        for (c, name) in outcome.history_columns.iter().enumerate().skip(1) {
            let pts = outcome.history.iter().map(|row| (row[0], row[c])).collect();
            let plot = Plot::new(format!("{kind}: {name}"), x.as_str(), name.as_str()).with_series(Series::new(name.as_str(), pts));
            out.write(&format!("{name}.svg"), &plot.to_svg())?;
        }
    }
    Ok(())
}
