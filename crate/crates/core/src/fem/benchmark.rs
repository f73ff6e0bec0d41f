//! Benchmark drivers: depolarization of a cantilever beam under tip load,
//! poling of a two-layer bimorph, and a tilted-polarization specimen driven
//! through top and bottom electrodes.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::mesh::{axis_coordinates, AxisPiece};
use super::{FeModel, FeSettings, Mesh, StepReport, PHI, UX, UY, UZ};
use crate::error::{Error, Result};
use crate::material::MaterialParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Beam,
    Bimorph,
    NonpropField,
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "beam" => Ok(Benchmark::Beam),
            "bimorph" => Ok(Benchmark::Bimorph),
            "nonprop_field" => Ok(Benchmark::NonpropField),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Benchmark::Beam => "beam",
            Benchmark::Bimorph => "bimorph",
            Benchmark::NonpropField => "nonprop_field",
        })
    }
}

/// Geometry, mesh and load of a benchmark. Lengths in m.
///
/// * beam: `size = [length, depth (y), width (z)]`, `load` is the tip
///   shear traction in Pa, applied in `load_steps` equal increments.
/// * bimorph: `size = [length, width (y), upper layer thickness]`, the lower
///   layer is `lower_thickness` thick and `divisions[2]` is split evenly
///   between the layers; `load` is the poling field in the upper layer (V/m),
///   ramped up and down in `load_steps` increments each.
/// * nonprop_field: `size = [width, depth, height]`, `load` is the field
///   amplitude (V/m) and `angle_deg` the initial polarization angle from the
///   field direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub preset: String,
    pub size: [f64; 3],
    pub divisions: [usize; 3],
    pub lower_thickness: f64,
    pub load: f64,
    pub load_steps: usize,
    pub angle_deg: f64,
}

impl BenchmarkConfig {
    pub fn defaults(kind: Benchmark) -> Self {
        match kind {
            Benchmark::Beam => BenchmarkConfig {
                preset: "table1".into(),
                size: [13.5e-3, 2e-3, 2e-3],
                divisions: [20, 4, 4],
                lower_thickness: 0.0,
                load: 2.0e6,
                load_steps: 20,
                angle_deg: 0.0,
            },
            Benchmark::Bimorph => BenchmarkConfig {
                preset: "table1".into(),
                size: [10e-3, 2e-3, 0.4e-3],
                divisions: [20, 4, 6],
                lower_thickness: 0.6e-3,
                load: 2.0e6,
                load_steps: 4,
                angle_deg: 0.0,
            },
            Benchmark::NonpropField => BenchmarkConfig {
                preset: "table2".into(),
                size: [3e-3, 0.5e-3, 1e-3],
                divisions: [4, 1, 4],
                lower_thickness: 0.0,
                load: 2.0 * MaterialParams::table2().coercive_field,
                load_steps: 40,
                angle_deg: 135.0,
            },
        }
    }

    /// Defaults of `kind` overridden by the fields present in `json`.
    pub fn from_json_str(kind: Benchmark, json: &str) -> Result<Self> {
        let mut base = serde_json::to_value(Self::defaults(kind))?;
        let over: serde_json::Value = serde_json::from_str(json)?;
        let serde_json::Value::Object(over) = over else {
            return Err(Error::Config("benchmark config must be a JSON object".into()));
        };
        let obj = base.as_object_mut().expect("config serializes to an object");
        for (k, v) in over {
            if !obj.contains_key(&k) {
                return Err(Error::Config(format!("unknown benchmark config field `{k}`")));
            }
            obj.insert(k, v);
        }
        let cfg: BenchmarkConfig = serde_json::from_value(base)?;
        cfg.validate(kind)?;
        Ok(cfg)
    }

    pub fn validate(&self, kind: Benchmark) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !self.size.iter().all(|v| positive(*v)) || self.divisions.iter().any(|d| *d == 0) || self.load_steps == 0 {
            return Err(Error::Config("sizes, divisions and load steps must be positive".into()));
        }
        if !self.load.is_finite() || !self.angle_deg.is_finite() {
            return Err(Error::Config("load and angle must be finite".into()));
        }
        match kind {
            Benchmark::Beam if self.divisions[1] % 2 == 1 || self.divisions[2] % 2 == 1 => {
                Err(Error::Config("beam cross-section divisions must be even".into()))
            }
            Benchmark::Bimorph if !positive(self.lower_thickness) || self.divisions[2] < 2 || self.divisions[1] % 2 == 1 => {
                Err(Error::Config("bimorph needs a lower layer, at least two thickness divisions and even width divisions".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Scalar results in a fixed order, per-step history and the final model.
#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub kind: Benchmark,
    pub report: Vec<(String, f64)>,
    /// Column names of `history`.
    pub history_columns: Vec<String>,
    pub history: Vec<Vec<f64>>,
    pub steps: Vec<StepReport>,
    pub model: FeModel,
}

impl BenchmarkOutcome {
    pub fn value(&self, key: &str) -> Option<f64> {
        self.report.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

pub fn run_benchmark(kind: Benchmark, cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    let material = MaterialParams::preset(&cfg.preset)?;
    let settings = FeSettings::for_material(&material);
    run_benchmark_with(kind, cfg, material, settings)
}

pub fn run_benchmark_with(kind: Benchmark, cfg: &BenchmarkConfig, material: MaterialParams, settings: FeSettings) -> Result<BenchmarkOutcome> {
    cfg.validate(kind)?;
    settings.validate()?;
    match kind {
        Benchmark::Beam => beam(cfg, material, settings),
        Benchmark::Bimorph => bimorph(cfg, material, settings),
        Benchmark::NonpropField => nonprop_field(cfg, material, settings),
    }
}

fn summary_counters(report: &mut Vec<(String, f64)>, steps: &[StepReport]) {
    let loops = steps.iter().map(|s| s.active_loops).max().unwrap_or(0);
    let newton: usize = steps.iter().map(|s| s.newton_iterations).sum();
    let dissipation: f64 = steps.iter().map(|s| s.dissipation).sum();
    report.push(("steps".into(), steps.len() as f64));
    report.push(("substeps".into(), steps.iter().map(|s| s.substeps).sum::<usize>() as f64));
    report.push(("max_active_loops".into(), loops as f64));
    report.push(("newton_iterations".into(), newton as f64));
    report.push(("total_dissipation_J".into(), dissipation));
}

/// Largest number of successive halvings of a failing load increment.
pub const MAX_CUTS: usize = 6;

/// Moves the load level from `from` to `to` in one step, halving the
/// increment recursively when the step fails to converge.
fn advance(model: &mut FeModel, from: f64, to: f64, apply: &dyn Fn(&mut FeModel, f64), cuts: usize) -> Result<StepReport> {
    apply(model, to);
    match model.solve_step() {
        Ok(r) => Ok(r),
        Err(e) if e.is_solver_failure() && cuts < MAX_CUTS => {
            let mid = 0.5 * (from + to);
            let a = advance(model, from, mid, apply, cuts + 1)?;
            let b = advance(model, mid, to, apply, cuts + 1)?;
            Ok(StepReport {
                step: b.step,
                active_loops: a.active_loops.max(b.active_loops),
                newton_iterations: a.newton_iterations + b.newton_iterations,
                merit: b.merit,
                dissipation: a.dissipation + b.dissipation,
                switching_elements: b.switching_elements,
                saturated_elements: b.saturated_elements,
                substeps: a.substeps + b.substeps,
            })
        }
        Err(e) => Err(e),
    }
}

/// Clamp on the face `x = 0`: longitudinal displacement everywhere, lateral
/// displacement along the line `y = y_mid` and vertical displacement at the
/// node `(y_mid, z_mid)`. Free expansion within the face stays possible.
fn clamp(model: &mut FeModel, j_mid: usize, k_mid: usize) {
    let mesh = model.mesh.clone();
    for j in 0..mesh.ys.len() {
        for k in 0..mesh.zs.len() {
            let n = mesh.node_index(0, j, k);
            model.fix(FeModel::dof(n, UX), 0.0);
            if j == j_mid {
                model.fix(FeModel::dof(n, UY), 0.0);
            }
        }
    }
    model.fix(FeModel::dof(mesh.node_index(0, j_mid, k_mid), UZ), 0.0);
}

fn ground_face(model: &mut FeModel, axis: usize, index: usize, value: f64) {
    for n in 0..model.mesh.n_nodes() {
        if model.mesh.node_ijk(n)[axis] == index {
            model.fix(FeModel::dof(n, PHI), value);
        }
    }
}

fn beam(cfg: &BenchmarkConfig, material: MaterialParams, settings: FeSettings) -> Result<BenchmarkOutcome> {
    let [l, h, w] = cfg.size;
    let mesh = Mesh::uniform([0.0, -0.5 * h, -0.5 * w], cfg.size, cfg.divisions)?;
    let [nx, ny, nz] = cfg.divisions;
    let ps = material.saturation_polarization;
    let mut model = FeModel::new(mesh, material, settings);
    model.set_polarization(|_| Vector3::new(ps, 0.0, 0.0));
    clamp(&mut model, ny / 2, nz / 2);
    ground_face(&mut model, 0, 0, 0.0);
    ground_face(&mut model, 0, nx, 0.0);

    let top_row: Vec<Vec<usize>> = (0..nx).map(|i| (0..nz).map(|k| model.mesh.element_index(i, ny - 1, k)).collect()).collect();
    let column_min = |m: &FeModel| -> Vec<f64> {
        top_row.iter().map(|col| col.iter().map(|&e| m.states[e].pol.norm() / ps).fold(f64::INFINITY, f64::min)).collect()
    };
    let tip = model.mesh.nearest_node([l, 0.0, 0.0]);
    let mut steps = Vec::new();
    let mut history = Vec::new();
    let apply = |m: &mut FeModel, t: f64| {
        m.clear_loads();
        m.add_face_traction(0, 1, [0.0, t, 0.0]);
    };
    for s in 1..=cfg.load_steps {
        let t = cfg.load * s as f64 / cfg.load_steps as f64;
        let t_prev = cfg.load * (s - 1) as f64 / cfg.load_steps as f64;
        steps.push(advance(&mut model, t_prev, t, &apply, 0)?);
        let cols = column_min(&model);
        history.push(vec![t, cols.iter().cloned().fold(f64::INFINITY, f64::min), model.displacement(tip)[1]]);
    }
    let cols = column_min(&model);
    let min_p = cols.iter().cloned().fold(f64::INFINITY, f64::min);
    let full = 1.0 - model.settings.local.delta_s / ps;
    let first_full = (0..nx).rev().take_while(|&i| cols[i] >= full).last();
    let boundary = match first_full {
        Some(i) => model.mesh.xs[i],
        None => l,
    };
    let fields = model.recover_fields();
    let root_top = fields[model.mesh.element_index(0, ny - 1, nz / 2)].stress.0[0];
    let root_bottom = fields[model.mesh.element_index(0, 0, nz / 2)].stress.0[0];
    let mut report = vec![
        ("min_PI_over_Psat".to_string(), min_p),
        ("fully_poled_boundary_m".to_string(), boundary),
        ("tip_deflection_m".to_string(), model.displacement(tip)[1]),
        ("root_top_sigma_xx_Pa".to_string(), root_top),
        ("root_bottom_sigma_xx_Pa".to_string(), root_bottom),
        ("length_m".to_string(), l),
        ("tip_traction_Pa".to_string(), cfg.load),
    ];
    summary_counters(&mut report, &steps);
    Ok(BenchmarkOutcome {
        kind: Benchmark::Beam,
        report,
        history_columns: vec!["traction_Pa".into(), "min_PI_over_Psat".into(), "tip_deflection_m".into()],
        history,
        steps,
        model,
    })
}

fn bimorph(cfg: &BenchmarkConfig, material: MaterialParams, settings: FeSettings) -> Result<BenchmarkOutcome> {
    let [l, w, upper] = cfg.size;
    let lower = cfg.lower_thickness;
    let nz_low = cfg.divisions[2] / 2;
    let nz_up = cfg.divisions[2] - nz_low;
    let xs = axis_coordinates(0.0, &[AxisPiece { length: l, divisions: cfg.divisions[0], ratio: 1.0 }])?;
    let ys = axis_coordinates(-0.5 * w, &[AxisPiece { length: w, divisions: cfg.divisions[1], ratio: 1.0 }])?;
    let zs = axis_coordinates(
        -lower,
        &[AxisPiece { length: lower, divisions: nz_low, ratio: 1.0 }, AxisPiece { length: upper, divisions: nz_up, ratio: 1.0 }],
    )?;
    let mesh = Mesh::from_coordinates(xs, ys, zs)?;
    let ps = material.saturation_polarization;
    let [nx, ny, nz] = mesh.divisions();
    let mut model = FeModel::new(mesh, material, settings);
    clamp(&mut model, ny / 2, nz_low);
    ground_face(&mut model, 2, 0, 0.0);
    ground_face(&mut model, 2, nz_low, 0.0);

    let center = model.mesh.nearest_node([l, 0.0, 0.0]);
    let corner_a = model.mesh.node_index(nx, 0, nz_low);
    let corner_b = model.mesh.node_index(nx, ny, nz_low);
    let mut steps = Vec::new();
    let mut history = Vec::new();
    let n = cfg.load_steps;
    let apply = |m: &mut FeModel, field: f64| ground_face(m, 2, nz, -field * upper);
    let mut level = 0.0;
    for s in (1..=n).chain((0..n).rev()) {
        let field = cfg.load * s as f64 / n as f64;
        steps.push(advance(&mut model, level, field, &apply, 0)?);
        level = field;
        history.push(vec![field, model.displacement(center)[2], model.displacement(corner_a)[2]]);
    }
    let upper_elems = model.mesh.elements_where(|[_, _, k]| k >= nz_low);
    let lower_elems = model.mesh.elements_where(|[_, _, k]| k < nz_low);
    let min_upper = upper_elems.iter().map(|&e| model.states[e].pol.norm() / ps).fold(f64::INFINITY, f64::min);
    let max_lower = lower_elems.iter().map(|&e| model.states[e].pol.norm() / ps).fold(0.0, f64::max);
    let fields = model.recover_fields();
    let max_ez = fields.iter().map(|f| f.field[2].abs()).fold(0.0, f64::max);
    let corner = 0.5 * (model.displacement(corner_a)[2] + model.displacement(corner_b)[2]);
    let mut report = vec![
        ("tip_deflection_center_m".to_string(), model.displacement(center)[2]),
        ("tip_deflection_corner_m".to_string(), corner),
        ("upper_min_PI_over_Psat".to_string(), min_upper),
        ("lower_max_PI_over_Psat".to_string(), max_lower),
        ("max_abs_E_z_V_per_m".to_string(), max_ez),
        ("length_m".to_string(), l),
    ];
    summary_counters(&mut report, &steps);
    Ok(BenchmarkOutcome {
        kind: Benchmark::Bimorph,
        report,
        history_columns: vec!["poling_field_V_per_m".into(), "tip_center_u_z_m".into(), "tip_corner_u_z_m".into()],
        history,
        steps,
        model,
    })
}

fn nonprop_field(cfg: &BenchmarkConfig, material: MaterialParams, settings: FeSettings) -> Result<BenchmarkOutcome> {
    let [wx, wy, h] = cfg.size;
    let mesh = Mesh::uniform([-0.5 * wx, -0.5 * wy, 0.0], cfg.size, cfg.divisions)?;
    let [nx, ny, nz] = mesh.divisions();
    let ps = material.saturation_polarization;
    let alpha = cfg.angle_deg.to_radians();
    let dir = Vector3::new(alpha.sin(), 0.0, alpha.cos());
    let mut model = FeModel::new(mesh, material, settings);
    // rigid-body supports at three bottom corners
    let a = model.mesh.node_index(0, 0, 0);
    let b = model.mesh.node_index(nx, 0, 0);
    let c = model.mesh.node_index(0, ny, 0);
    for comp in [UX, UY, UZ] {
        model.fix(FeModel::dof(a, comp), 0.0);
    }
    model.fix(FeModel::dof(b, UY), 0.0);
    model.fix(FeModel::dof(b, UZ), 0.0);
    model.fix(FeModel::dof(c, UZ), 0.0);
    ground_face(&mut model, 2, 0, 0.0);
    ground_face(&mut model, 2, nz, 0.0);

    // poled state with grounded electrodes, equilibrated without switching
    model.set_polarization(|_| dir * ps);
    model.solve_reversible()?;

    let probe = model.mesh.element_index(nx / 2, ny / 2, nz / 2);
    let d0 = model.recover_fields()[probe].displacement[2];
    let n = cfg.load_steps;
    let mut steps = Vec::new();
    let mut history = Vec::new();
    let mut max_dd: f64 = 0.0;
    let apply = |m: &mut FeModel, field: f64| ground_face(m, 2, nz, -field * h);
    let mut level = 0.0;
    for s in (1..=n).chain((0..n).rev()) {
        let field = cfg.load * s as f64 / n as f64;
        steps.push(advance(&mut model, level, field, &apply, 0)?);
        level = field;
        let f = model.recover_fields()[probe];
        let dd = f.displacement[2] - d0;
        max_dd = max_dd.max(dd);
        history.push(vec![field, f.field[2], dd, f.pol[0], f.pol[2]]);
    }
    let last = history.last().cloned().unwrap_or_default();
    let mut report = vec![
        ("angle_deg".to_string(), cfg.angle_deg),
        ("final_delta_D_over_Psat".to_string(), last.get(2).copied().unwrap_or(0.0) / ps),
        ("max_delta_D_over_Psat".to_string(), max_dd / ps),
        ("final_P_x_over_Psat".to_string(), last.get(3).copied().unwrap_or(0.0) / ps),
        ("final_P_z_over_Psat".to_string(), last.get(4).copied().unwrap_or(0.0) / ps),
    ];
    summary_counters(&mut report, &steps);
    Ok(BenchmarkOutcome {
        kind: Benchmark::NonpropField,
        report,
        history_columns: vec![
            "applied_field_V_per_m".into(),
            "center_E_z_V_per_m".into(),
            "center_delta_D_z_C_per_m2".into(),
            "center_P_x_C_per_m2".into(),
            "center_P_z_C_per_m2".into(),
        ],
        history,
        steps,
        model,
    })
}

/// Relative change of the beam's minimum polarization when the mesh is
/// refined by `factor` along each axis.
pub fn beam_refinement_change(cfg: &BenchmarkConfig, factor: [usize; 3]) -> Result<(f64, f64, f64)> {
    let coarse = run_benchmark(Benchmark::Beam, cfg)?;
    let mut fine_cfg = cfg.clone();
    for a in 0..3 {
        fine_cfg.divisions[a] *= factor[a];
    }
    let fine = run_benchmark(Benchmark::Beam, &fine_cfg)?;
    let key = "min_PI_over_Psat";
    let (c, f) = (coarse.value(key).unwrap_or(f64::NAN), fine.value(key).unwrap_or(f64::NAN));
    Ok((c, f, (f - c).abs() / c.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_overrides_and_validation() {
        let cfg = BenchmarkConfig::from_json_str(Benchmark::Beam, r#"{"load_steps": 5, "size": [0.01, 0.002, 0.002]}"#).unwrap();
        assert_eq!(cfg.load_steps, 5);
        assert_eq!(cfg.divisions, [20, 4, 4]);
        assert!(BenchmarkConfig::from_json_str(Benchmark::Beam, r#"{"bogus": 1}"#).is_err());
        assert!(BenchmarkConfig::from_json_str(Benchmark::Beam, r#"{"divisions": [2, 3, 4]}"#).is_err());
        assert!(BenchmarkConfig::from_json_str(Benchmark::Bimorph, r#"{"lower_thickness": 0.0}"#).is_err());
        assert_eq!("nonprop-field".parse::<Benchmark>().unwrap(), Benchmark::NonpropField);
    }

    #[test]
    fn small_beam_bends_and_depolarizes_at_root() {
        let mut cfg = BenchmarkConfig::defaults(Benchmark::Beam);
        cfg.divisions = [8, 2, 2];
        cfg.load_steps = 4;
        cfg.load = 5.0e6;
        let out = run_benchmark(Benchmark::Beam, &cfg).unwrap();
        let top = out.value("root_top_sigma_xx_Pa").unwrap();
        let bottom = out.value("root_bottom_sigma_xx_Pa").unwrap();
        // compression on top, tension below
        assert!(top < 0.0 && bottom > 0.0);
        assert!(out.value("tip_deflection_m").unwrap() > 0.0);
        assert!(out.value("min_PI_over_Psat").unwrap() < 1.0);
        assert!(out.steps.iter().all(|s| s.dissipation >= -1e-12));
    }

    #[test]
    fn unloaded_beam_stays_stress_free() {
        let mut cfg = BenchmarkConfig::defaults(Benchmark::Beam);
        cfg.divisions = [4, 2, 2];
        cfg.load = 0.0;
        cfg.load_steps = 1;
        let out = run_benchmark(Benchmark::Beam, &cfg).unwrap();
        let sat = out.model.material.saturation_polarization;
        for f in out.model.recover_fields() {
            assert!(f.stress.norm_max() < 1e-3);
            assert!((f.pol.norm() - sat).abs() < 1e-12);
        }
    }
}
