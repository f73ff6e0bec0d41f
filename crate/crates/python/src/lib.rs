//! Python bindings: material law, point solver, load scenarios and the FE
//! benchmarks. Vectors are plain lists; stresses and strains use the order
//! 11, 22, 33, 23, 13, 12 with engineering shear strains.

use nalgebra::Vector3;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ferrovi::fem::benchmark::{run_benchmark as run_fe_benchmark, Benchmark, BenchmarkConfig};
use ferrovi::io;
use ferrovi::point_driver::{self, LoadProgram, Scenario, TraceRow};
use ferrovi::vi_solver::{self, InternalState, PointControls};
use ferrovi::{Error, MaterialParams, SymTensor2};

fn py_err(e: Error) -> PyErr {
    if e.is_solver_failure() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::from(v)
}

/// Constitutive parameters of the material model.
#[pyclass(name = "Material", module = "pyferrovi", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMaterial {
    inner: MaterialParams,
}

#[pymethods]
impl PyMaterial {
    /// Named parameter set: `table1` or `table2`.
    #[new]
    #[pyo3(signature = (preset="table1"))]
    fn new(preset: &str) -> PyResult<Self> {
        Ok(PyMaterial { inner: MaterialParams::preset(preset).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyMaterial { inner: MaterialParams::from_json_str(text).map_err(py_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    #[getter]
    fn coercive_field(&self) -> f64 {
        self.inner.coercive_field
    }

    #[getter]
    fn saturation_polarization(&self) -> f64 {
        self.inner.saturation_polarization
    }

    #[getter]
    fn saturation_strain(&self) -> f64 {
        self.inner.saturation_strain
    }

    #[getter]
    fn youngs_modulus(&self) -> f64 {
        self.inner.youngs_modulus
    }

    #[getter]
    fn permittivity(&self) -> f64 {
        self.inner.permittivity
    }

    #[pyo3(signature = (stress, field, pol, lambda_s=0.0))]
    fn enthalpy_density(&self, stress: [f64; 6], field: [f64; 3], pol: [f64; 3], lambda_s: f64) -> f64 {
        self.inner.enthalpy_density(&SymTensor2(stress), &vec3(field), &vec3(pol), lambda_s)
    }

    /// Thermodynamic driving force on the remanent polarization, V/m.
    #[pyo3(signature = (stress, field, pol, lambda_s=0.0))]
    fn driving_force(&self, stress: [f64; 6], field: [f64; 3], pol: [f64; 3], lambda_s: f64) -> [f64; 3] {
        self.inner.driving_force(&SymTensor2(stress), &vec3(field), &vec3(pol), lambda_s).into()
    }

    fn remanent_strain(&self, pol: [f64; 3]) -> [f64; 6] {
        self.inner.remanent_strain(&vec3(pol)).0
    }

    /// Total strain and dielectric displacement at fixed remanent polarization.
    fn reversible_response(&self, stress: [f64; 6], field: [f64; 3], pol: [f64; 3]) -> ([f64; 6], [f64; 3]) {
        let (strain, d) = self.inner.reversible_response(&SymTensor2(stress), &vec3(field), &vec3(pol));
        (strain.0, d.into())
    }

    fn __repr__(&self) -> String {
        format!(
            "Material(E_C={}, P_sat={}, S_sat={})",
            self.inner.coercive_field, self.inner.saturation_polarization, self.inner.saturation_strain
        )
    }
}

/// Point solver tolerances and limits.
#[pyclass(name = "SolverSettings", module = "pyferrovi", skip_from_py_object)]
#[derive(Clone)]
pub struct PySolverSettings {
    inner: vi_solver::SolverSettings,
}

#[pymethods]
impl PySolverSettings {
    #[new]
    fn new(material: &PyMaterial) -> Self {
        PySolverSettings { inner: vi_solver::SolverSettings::for_material(&material.inner) }
    }

    #[getter]
    fn newton_tol(&self) -> f64 {
        self.inner.newton_tol
    }

    #[setter]
    fn set_newton_tol(&mut self, v: f64) {
        self.inner.newton_tol = v;
    }

    #[getter]
    fn max_active_loops(&self) -> usize {
        self.inner.max_active_loops
    }

    #[setter]
    fn set_max_active_loops(&mut self, v: usize) {
        self.inner.max_active_loops = v;
    }

    #[getter]
    fn delta_p(&self) -> f64 {
        self.inner.delta_p
    }

    #[getter]
    fn delta_s(&self) -> f64 {
        self.inner.delta_s
    }
}

/// Remanent polarization and multipliers of one material point.
#[pyclass(name = "State", module = "pyferrovi", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyState {
    inner: InternalState,
}

#[pymethods]
impl PyState {
    #[new]
    #[pyo3(signature = (pol=[0.0; 3]))]
    fn new(pol: [f64; 3]) -> Self {
        PyState { inner: InternalState::with_polarization(vec3(pol)) }
    }

    #[getter]
    fn pol(&self) -> [f64; 3] {
        self.inner.pol.into()
    }

    #[getter]
    fn lambda_p(&self) -> f64 {
        self.inner.lambda_p
    }

    #[getter]
    fn lambda_s(&self) -> f64 {
        self.inner.lambda_s
    }

    /// Active constraints: "-", "P", "S" or "PS".
    #[getter]
    fn active(&self) -> &'static str {
        self.inner.active.label()
    }

    fn __repr__(&self) -> String {
        format!("State(pol={:?}, active={})", <[f64; 3]>::from(self.inner.pol), self.inner.active.label())
    }
}

fn settings_or_default(settings: Option<&PySolverSettings>, material: &PyMaterial) -> vi_solver::SolverSettings {
    settings.map_or_else(|| vi_solver::SolverSettings::for_material(&material.inner), |s| s.inner.clone())
}

/// One load increment from `prev` to the given stress and field. Returns the
/// new state, the end-of-step driving force and the dissipation increment.
#[pyfunction]
#[pyo3(signature = (material, prev, stress, field, settings=None))]
fn solve_increment(
    material: &PyMaterial,
    prev: &PyState,
    stress: [f64; 6],
    field: [f64; 3],
    settings: Option<&PySolverSettings>,
) -> PyResult<(PyState, [f64; 3], f64)> {
    let s = settings_or_default(settings, material);
    let ctrl = PointControls::new(SymTensor2(stress), vec3(field));
    let res = vi_solver::solve_increment(&prev.inner, &ctrl, &material.inner, &s).map_err(py_err)?;
    if !res.converged {
        return Err(PyRuntimeError::new_err("local Newton iteration did not converge"));
    }
    Ok((PyState { inner: res.state }, res.driving_force.into(), res.dissipation))
}

fn trace_dict<'py>(py: Python<'py>, trace: &[TraceRow]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let col = |f: &dyn Fn(&TraceRow) -> f64| trace.iter().map(f).collect::<Vec<f64>>();
    d.set_item("step", trace.iter().map(|r| r.step).collect::<Vec<_>>())?;
    d.set_item("segment", trace.iter().map(|r| r.segment).collect::<Vec<_>>())?;
    for i in 0..3 {
        d.set_item(format!("E{}", i + 1), col(&|r| r.field[i]))?;
        d.set_item(format!("P{}", i + 1), col(&|r| r.pol[i]))?;
        d.set_item(format!("D{}", i + 1), col(&|r| r.displacement[i]))?;
    }
    for (i, name) in ["11", "22", "33", "23", "13", "12"].iter().enumerate() {
        d.set_item(format!("s{name}"), col(&|r| r.stress.0[i]))?;
        d.set_item(format!("eps{name}"), col(&|r| r.strain.0[i]))?;
    }
    d.set_item("lambda_P", col(&|r| r.lambda_p))?;
    d.set_item("lambda_S", col(&|r| r.lambda_s))?;
    d.set_item("dissipation", col(&|r| r.dissipation))?;
    d.set_item("active_loops", trace.iter().map(|r| r.active_loops).collect::<Vec<_>>())?;
    Ok(d)
}

fn scenario_program(name: &str, material: &PyMaterial, resolution: usize) -> PyResult<LoadProgram> {
    let scenario: Scenario = name.parse().map_err(py_err)?;
    point_driver::build_scenario(scenario, &material.inner, resolution).map_err(py_err)
}

/// Runs a named scenario (`hysteresis`, `butterfly`, `mech_depol`,
/// `nonprop(<deg>)`) and returns the trace as a dict of columns.
#[pyfunction]
#[pyo3(signature = (name, material, resolution=point_driver::DEFAULT_STEPS_PER_EC, settings=None))]
fn run_scenario<'py>(
    py: Python<'py>,
    name: &str,
    material: &PyMaterial,
    resolution: usize,
    settings: Option<&PySolverSettings>,
) -> PyResult<Bound<'py, PyDict>> {
    let prog = scenario_program(name, material, resolution)?;
    let s = settings_or_default(settings, material);
    let trace = point_driver::run_program(&prog, &material.inner, &s).map_err(py_err)?;
    trace_dict(py, &trace)
}

/// Runs a load program given as JSON and returns the trace as CSV text.
#[pyfunction]
#[pyo3(signature = (program_json, material, settings=None))]
fn run_program_csv(program_json: &str, material: &PyMaterial, settings: Option<&PySolverSettings>) -> PyResult<String> {
    let prog: LoadProgram = serde_json::from_str(program_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let s = settings_or_default(settings, material);
    let trace = point_driver::run_program(&prog, &material.inner, &s).map_err(py_err)?;
    Ok(io::trace_csv(&trace, material.inner.saturation_polarization))
}

/// Closed-form uniaxial reference for a named scenario.
#[pyfunction]
#[pyo3(signature = (name, material, resolution=point_driver::DEFAULT_STEPS_PER_EC))]
fn uniaxial_reference<'py>(py: Python<'py>, name: &str, material: &PyMaterial, resolution: usize) -> PyResult<Bound<'py, PyDict>> {
    let prog = scenario_program(name, material, resolution)?;
    let trace = point_driver::oracle_1d(&prog, &material.inner).map_err(py_err)?;
    trace_dict(py, &trace)
}

/// Landmarks of the hysteresis scenario: onset, knee, remanent D, reverse onset.
#[pyfunction]
#[pyo3(signature = (material, resolution=point_driver::DEFAULT_STEPS_PER_EC))]
fn hysteresis_landmarks<'py>(py: Python<'py>, material: &PyMaterial, resolution: usize) -> PyResult<Bound<'py, PyDict>> {
    let prog = scenario_program("hysteresis", material, resolution)?;
    let s = vi_solver::SolverSettings::for_material(&material.inner);
    let trace = point_driver::run_program(&prog, &material.inner, &s).map_err(py_err)?;
    let l = point_driver::hysteresis_landmarks(&trace, &material.inner)
        .ok_or_else(|| PyRuntimeError::new_err("trace does not contain a full loop"))?;
    let d = PyDict::new(py);
    d.set_item("switching_onset", l.switching_onset)?;
    d.set_item("saturation_knee", l.saturation_knee)?;
    d.set_item("remanent_D", l.remanent_d)?;
    d.set_item("reverse_onset", l.reverse_onset)?;
    d.set_item("remanent_strain", l.remanent_strain)?;
    d.set_item("coercive_crossings", l.coercive_crossings)?;
    Ok(d)
}

/// Runs `beam`, `bimorph` or `nonprop_field` with defaults overridden by the
/// optional JSON object; returns the scalar report.
#[pyfunction]
#[pyo3(signature = (kind, config_json=None))]
fn run_benchmark<'py>(py: Python<'py>, kind: &str, config_json: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let kind: Benchmark = kind.parse().map_err(py_err)?;
    let cfg = match config_json {
        Some(text) => BenchmarkConfig::from_json_str(kind, text).map_err(py_err)?,
        None => BenchmarkConfig::defaults(kind),
    };
    let outcome = py.detach(|| run_fe_benchmark(kind, &cfg)).map_err(py_err)?;
    let d = PyDict::new(py);
    for (k, v) in &outcome.report {
        d.set_item(k, v)?;
    }
    Ok(d)
}

#[pymodule]
fn pyferrovi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMaterial>()?;
    m.add_class::<PySolverSettings>()?;
    m.add_class::<PyState>()?;
    m.add_function(wrap_pyfunction!(solve_increment, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_program_csv, m)?)?;
    m.add_function(wrap_pyfunction!(uniaxial_reference, m)?)?;
    m.add_function(wrap_pyfunction!(hysteresis_landmarks, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    Ok(())
}
