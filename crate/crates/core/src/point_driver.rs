//! Load programs at a single material point.
//!
//! A [`LoadProgram`] is a piecewise-linear path in (σ, E) starting from
//! `start`. Each segment is split into equal steps; every step is one call of
//! [`solve_increment`]. [`oracle_1d`] solves uniaxial programs in closed form
//! with dense sub-stepping and serves as reference.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::{MaterialParams, VIRGIN_THRESHOLD};
use crate::tensors::SymTensor2;
use crate::vi_solver::{solve_increment, InternalState, PointControls, SolverSettings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Stress at the end of the segment, Pa.
    pub stress: SymTensor2,
    /// Field at the end of the segment, V/m.
    pub field: Vector3<f64>,
    pub steps: usize,
}

impl Segment {
    pub fn electric(e3: f64, steps: usize) -> Self {
        Segment { stress: SymTensor2::ZERO, field: Vector3::new(0.0, 0.0, e3), steps }
    }

    pub fn uniaxial(s33: f64, e3: f64, steps: usize) -> Self {
        Segment { stress: SymTensor2::uniaxial_33(s33), field: Vector3::new(0.0, 0.0, e3), steps }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadProgram {
    #[serde(default)]
    pub start: PointControls,
    #[serde(default)]
    pub initial_state: InternalState,
    #[serde(default)]
    pub segments: Vec<Segment>,
}

impl LoadProgram {
    pub fn total_steps(&self) -> usize {
        self.segments.iter().map(|s| s.steps).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.steps == 0 {
                return Err(Error::Config(format!("segment {i} has zero steps")));
            }
            if !(seg.stress.is_finite() && seg.field.iter().all(|v| v.is_finite())) {
                return Err(Error::Config(format!("segment {i} has non-finite targets")));
            }
        }
        if !self.start.is_finite() || !self.initial_state.pol.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("non-finite program start".into()));
        }
        Ok(())
    }

    /// Controls at the end of every step, in order, with the segment index.
    pub fn step_controls(&self) -> Vec<(usize, PointControls)> {
        let mut out = Vec::with_capacity(self.total_steps());
        let mut from = self.start;
        for (idx, seg) in self.segments.iter().enumerate() {
            let ds = seg.stress.sub(&from.stress);
            let de = seg.field - from.field;
            let n = seg.steps as f64;
            for k in 1..=seg.steps {
                let ctrl = if k == seg.steps {
                    PointControls::new(seg.stress, seg.field)
                } else {
                    let t = k as f64;
                    PointControls::new(
                        SymTensor2(std::array::from_fn(|i| from.stress.0[i] + ds.0[i] * t / n)),
                        from.field + de * t / n,
                    )
                };
                out.push((idx, ctrl));
            }
            from = PointControls::new(seg.stress, seg.field);
        }
        out
    }
}

/// One recorded load step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// 1-based step index.
    pub step: usize,
    pub segment: usize,
    pub stress: SymTensor2,
    pub field: Vector3<f64>,
    pub pol: Vector3<f64>,
    pub lambda_p: f64,
    pub lambda_s: f64,
    /// Total strain, engineering shears.
    pub strain: SymTensor2,
    pub displacement: Vector3<f64>,
    pub driving_force: Vector3<f64>,
    /// `f_P` at the end of the step, V/m.
    pub switching: f64,
    /// Dissipation increment of this step, J/m³.
    pub dissipation: f64,
    pub cumulative_dissipation: f64,
    pub newton_iterations: usize,
    pub active_loops: usize,
}

/// Runs a load program step by step.
pub fn run_program(prog: &LoadProgram, p: &MaterialParams, s: &SolverSettings) -> Result<Vec<TraceRow>> {
    prog.validate()?;
    s.validate()?;
    let mut state = prog.initial_state;
    let mut cumulative = 0.0;
    let mut trace = Vec::with_capacity(prog.total_steps());
    for (i, (segment, ctrl)) in prog.step_controls().into_iter().enumerate() {
        let step = i + 1;
        let res = solve_increment(&state, &ctrl, p, s).map_err(|e| match e {
            Error::InvalidParameter(_) | Error::Config(_) => e,
            other => Error::StepFailed { step, reason: other.to_string() },
        })?;
        if !res.converged {
            return Err(Error::StepFailed { step, reason: "local Newton iteration did not converge".into() });
        }
        state = res.state;
        cumulative += res.dissipation;
        let (strain, displacement) = p.reversible_response(&ctrl.stress, &ctrl.field, &state.pol);
        trace.push(TraceRow {
            step,
            segment,
            stress: ctrl.stress,
            field: ctrl.field,
            pol: state.pol,
            lambda_p: state.lambda_p,
            lambda_s: state.lambda_s,
            strain,
            displacement,
            driving_force: res.driving_force,
            switching: p.switching_fn(&res.driving_force),
            dissipation: res.dissipation,
            cumulative_dissipation: cumulative,
            newton_iterations: res.newton_iterations,
            active_loops: res.active_loops,
        });
    }
    Ok(trace)
}

/// Default number of oracle sub-steps per program step.
pub const ORACLE_SUBSTEPS: usize = 10_000;

fn check_uniaxial(prog: &LoadProgram) -> Result<()> {
    let uni = |s: &SymTensor2, e: &Vector3<f64>| {
        s.0.iter().enumerate().all(|(i, v)| i == 2 || *v == 0.0) && e[0] == 0.0 && e[1] == 0.0
    };
    if !uni(&prog.start.stress, &prog.start.field) {
        return Err(Error::NotUniaxial("program start".into()));
    }
    let pol = prog.initial_state.pol;
    if pol[0] != 0.0 || pol[1] != 0.0 {
        return Err(Error::NotUniaxial("initial polarization".into()));
    }
    for (i, seg) in prog.segments.iter().enumerate() {
        if !uni(&seg.stress, &seg.field) {
            return Err(Error::NotUniaxial(format!("segment {i}")));
        }
    }
    Ok(())
}

/// Closed-form uniaxial response with `P_I = P e_3`.
///
/// Along the axis the driving force is `Ê = a − b P − λ_S sgn P` with
/// `a = E (1 + σ d_p / P_sat)` and `b = c − 2 S_sat σ / P_sat²`. Along the
/// axis the coupling is linear in `P`, so `a` holds at `P = 0` as well.
struct Uniaxial<'a> {
    p: &'a MaterialParams,
}

impl Uniaxial<'_> {
    fn a(&self, e: f64, s: f64) -> f64 {
        e * (1.0 + s * self.p.d_p / self.p.saturation_polarization)
    }

    fn b(&self, s: f64) -> f64 {
        let ps = self.p.saturation_polarization;
        self.p.hardening - 2.0 * self.p.saturation_strain * s / (ps * ps)
    }

    /// Exact increment from `pol` to the new state at (e, s): returns (P, λ_S).
    fn update(&self, pol: f64, e: f64, s: f64) -> Result<(f64, f64)> {
        let b = self.b(s);
        if b <= 0.0 {
            return Err(Error::InvalidParameter(format!("tensile stress {s} Pa removes the hardening")));
        }
        let ec = self.p.coercive_field;
        let ps = self.p.saturation_polarization;
        let trial = self.a(e, s) - b * pol;
        if trial.abs() <= ec {
            return Ok((pol, 0.0));
        }
        let dir = trial.signum();
        let a = self.a(e, s);
        let next = (a - dir * ec) / b;
        if next.abs() <= ps {
            Ok((next, 0.0))
        } else {
            let clamped = ps * next.signum();
            Ok((clamped, (a - b * clamped - dir * ec) * clamped.signum()))
        }
    }

    fn driving_force(&self, pol: f64, lambda_s: f64, e: f64, s: f64) -> f64 {
        let sat = if pol.abs() < VIRGIN_THRESHOLD * self.p.saturation_polarization { 0.0 } else { lambda_s * pol.signum() };
        self.a(e, s) - self.b(s) * pol - sat
    }

    fn response(&self, pol: f64, e: f64, s: f64) -> (SymTensor2, f64) {
        let p = self.p;
        let ps = p.saturation_polarization;
        let ratio = pol / ps;
        let y = p.youngs_modulus;
        let rem = p.saturation_strain * ratio * ratio;
        let e33 = s / y + ratio * p.d_p * e + rem;
        let e11 = -p.poisson_ratio * s / y + ratio * p.d_n * e - 0.5 * rem;
        let d3 = ratio * p.d_p * s + p.permittivity * e + pol;
        (SymTensor2([e11, e11, e33, 0.0, 0.0, 0.0]), d3)
    }
}

/// Closed-form reference for uniaxial programs (σ = σ_33, E = E_3, P_I ∥ e_3).
pub fn oracle_1d(prog: &LoadProgram, p: &MaterialParams) -> Result<Vec<TraceRow>> {
    oracle_1d_with_substeps(prog, p, ORACLE_SUBSTEPS)
}

pub fn oracle_1d_with_substeps(prog: &LoadProgram, p: &MaterialParams, substeps: usize) -> Result<Vec<TraceRow>> {
    prog.validate()?;
    check_uniaxial(prog)?;
    if substeps == 0 {
        return Err(Error::Config("oracle needs at least one sub-step".into()));
    }
    let law = Uniaxial { p };
    let mut pol = prog.initial_state.pol[2];
    let mut lambda_s = 0.0;
    let mut from = (prog.start.field[2], prog.start.stress.0[2]);
    let mut cumulative = 0.0;
    let mut trace = Vec::with_capacity(prog.total_steps());
    for (i, (segment, ctrl)) in prog.step_controls().into_iter().enumerate() {
        let to = (ctrl.field[2], ctrl.stress.0[2]);
        let start_pol = pol;
        let mut dissipation = 0.0;
        for k in 1..=substeps {
            let t = k as f64 / substeps as f64;
            let (e, s) = if k == substeps { to } else { (from.0 + (to.0 - from.0) * t, from.1 + (to.1 - from.1) * t) };
            let (next, ls) = law.update(pol, e, s)?;
            dissipation += law.driving_force(next, ls, e, s) * (next - pol);
            pol = next;
            lambda_s = ls;
        }
        cumulative += dissipation;
        let (strain, d3) = law.response(pol, to.0, to.1);
        let ehat = law.driving_force(pol, lambda_s, to.0, to.1);
        trace.push(TraceRow {
            step: i + 1,
            segment,
            stress: SymTensor2::uniaxial_33(to.1),
            field: Vector3::new(0.0, 0.0, to.0),
            pol: Vector3::new(0.0, 0.0, pol),
            lambda_p: (pol - start_pol).abs(),
            lambda_s,
            strain,
            displacement: Vector3::new(0.0, 0.0, d3),
            driving_force: Vector3::new(0.0, 0.0, ehat),
            switching: ehat.abs() - p.coercive_field,
            dissipation,
            cumulative_dissipation: cumulative,
            newton_iterations: 0,
            active_loops: 0,
        });
        from = to;
    }
    Ok(trace)
}

/// Compressive axial stress at which a point with axial polarization `pol`
/// under axial field `field` starts to switch, found by bisection.
pub fn oracle_depolarization_onset(p: &MaterialParams, pol: f64, field: f64) -> Result<f64> {
    let law = Uniaxial { p };
    let margin = |s: f64| law.driving_force(pol, 0.0, field, s).abs() - p.coercive_field;
    if margin(0.0) >= 0.0 {
        return Err(Error::InvalidParameter("point already switches without stress".into()));
    }
    let mut lo = -1.0e6;
    while margin(lo) < 0.0 {
        lo *= 2.0;
        if lo < -1.0e12 {
            return Err(Error::InvalidParameter("no depolarization onset in compression".into()));
        }
    }
    let mut hi = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if margin(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (lo - hi).abs() <= 1e-13 * lo.abs() {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Load parameter at which `f_P` reaches zero, extrapolated linearly from the
/// last two steps before the polarization first changes.
pub fn extrapolated_onset(trace: &[TraceRow], parameter: impl Fn(&TraceRow) -> f64, pol0: Vector3<f64>) -> Option<f64> {
    let first = trace.iter().position(|r| r.pol != pol0)?;
    if first < 2 {
        return None;
    }
    let (a, b) = (&trace[first - 2], &trace[first - 1]);
    let (xa, xb) = (parameter(a), parameter(b));
    let slope = (b.switching - a.switching) / (xb - xa);
    if slope == 0.0 {
        return None;
    }
    Some(xb - b.switching / slope)
}

/// Characteristic points of a ±2E_C electric hysteresis trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HysteresisLandmarks {
    /// Largest field on the first ramp with the point still unpoled, V/m.
    pub switching_onset: f64,
    /// Smallest field on the first ramp at which `|P_I| = P_sat`, V/m.
    pub saturation_knee: f64,
    /// `D_3` at `E = 0` on the descending branch, C/m².
    pub remanent_d: f64,
    /// Smallest field on the descending branch before `P_I` starts to drop, V/m.
    pub reverse_onset: f64,
    /// Fields at which `D_3` changes sign on the descending and ascending branch, V/m.
    pub coercive_crossings: Vec<f64>,
    /// `ε_33` at `E = 0` on the descending branch.
    pub remanent_strain: f64,
}

pub fn hysteresis_landmarks(trace: &[TraceRow], p: &MaterialParams) -> Option<HysteresisLandmarks> {
    let seg = |k: usize| trace.iter().filter(move |r| r.segment == k);
    let switching_onset = seg(0).take_while(|r| r.pol.norm() == 0.0).last()?.field[2];
    let saturation_knee = seg(0).find(|r| r.pol.norm() >= p.saturation_polarization * (1.0 - 1e-9))?.field[2];
    let descending: Vec<&TraceRow> = seg(1).collect();
    let at_zero = |rows: &[&TraceRow], f: &dyn Fn(&TraceRow) -> f64| -> Option<f64> {
        rows.windows(2).find_map(|w| {
            let (a, b) = (w[0].field[2], w[1].field[2]);
            if a == 0.0 {
                Some(f(w[0]))
            } else if b == 0.0 {
                Some(f(w[1]))
            } else if a.signum() != b.signum() {
                Some(f(w[0]) + (f(w[1]) - f(w[0])) * a / (a - b))
            } else {
                None
            }
        })
    };
    let remanent_d = at_zero(&descending, &|r| r.displacement[2])?;
    let remanent_strain = at_zero(&descending, &|r| r.strain.0[2])?;
    let ps = descending.first()?.pol[2];
    let tol = 1e-12 * p.saturation_polarization;
    let reverse_onset = descending.iter().take_while(|r| (r.pol[2] - ps).abs() <= tol).last()?.field[2];
    let mut coercive_crossings = Vec::new();
    for k in [1usize, 2] {
        let rows: Vec<&TraceRow> = seg(k).collect();
        if let Some(x) = rows.windows(2).find_map(|w| {
            let (a, b) = (w[0].displacement[2], w[1].displacement[2]);
            (a.signum() != b.signum()).then(|| w[0].field[2] + (w[1].field[2] - w[0].field[2]) * a / (a - b))
        }) {
            coercive_crossings.push(x);
        }
    }
    Some(HysteresisLandmarks { switching_onset, saturation_knee, remanent_d, reverse_onset, coercive_crossings, remanent_strain })
}

/// Named single-point scenarios.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scenario {
    Hysteresis,
    Butterfly,
    MechDepol,
    /// Initial polarization tilted by the angle (degrees) from the field axis.
    NonProp(f64),
}

impl FromStr for Scenario {
    type Err = Error;

    /// Accepts `hysteresis`, `butterfly`, `mech_depol` (or `mech-depol`) and
    /// `nonprop` / `nonprop(<deg>)`.
    fn from_str(name: &str) -> Result<Self> {
        let name = name.trim();
        match name {
            "hysteresis" => return Ok(Scenario::Hysteresis),
            "butterfly" => return Ok(Scenario::Butterfly),
            "mech_depol" | "mech-depol" => return Ok(Scenario::MechDepol),
            "nonprop" => return Ok(Scenario::NonProp(0.0)),
            _ => {}
        }
        if let Some(arg) = name.strip_prefix("nonprop(").and_then(|r| r.strip_suffix(')')) {
            let deg: f64 = arg.trim().parse().map_err(|_| Error::UnknownScenario(name.to_string()))?;
            if deg.is_finite() {
                return Ok(Scenario::NonProp(deg));
            }
        }
        Err(Error::UnknownScenario(name.to_string()))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Hysteresis => write!(f, "hysteresis"),
            Scenario::Butterfly => write!(f, "butterfly"),
            Scenario::MechDepol => write!(f, "mech_depol"),
            Scenario::NonProp(a) => write!(f, "nonprop({a})"),
        }
    }
}

/// Default resolution: steps per `E_C` of field travel.
pub const DEFAULT_STEPS_PER_EC: usize = 100;

/// Peak compressive stress of the mechanical depolarization ramp, Pa.
pub const DEPOL_STRESS: f64 = -100.0e6;

/// Builds the load program of a scenario. `resolution` is the number of steps
/// per `E_C` of field travel (the stress ramp uses four times as many steps).
pub fn build_scenario(scenario: Scenario, p: &MaterialParams, resolution: usize) -> Result<LoadProgram> {
    if resolution == 0 {
        return Err(Error::Config("resolution must be at least one step".into()));
    }
    let ec = p.coercive_field;
    let n = resolution;
    let prog = match scenario {
        Scenario::Hysteresis | Scenario::Butterfly => LoadProgram {
            segments: vec![
                Segment::electric(2.0 * ec, 2 * n),
                Segment::electric(-2.0 * ec, 4 * n),
                Segment::electric(2.0 * ec, 4 * n),
                Segment::electric(0.0, 2 * n),
            ],
            ..Default::default()
        },
        Scenario::MechDepol => LoadProgram {
            segments: vec![
                Segment::electric(2.0 * ec, 2 * n),
                Segment::electric(0.0, 2 * n),
                Segment::uniaxial(DEPOL_STRESS, 0.0, 4 * n),
            ],
            ..Default::default()
        },
        Scenario::NonProp(deg) => {
            let a = deg.to_radians();
            let ps = p.saturation_polarization;
            // exact values at the listed angles keep the 0° case free of transverse noise
            let (sin, cos) = match deg.rem_euclid(360.0) {
                x if x == 0.0 => (0.0, 1.0),
                x if x == 90.0 => (1.0, 0.0),
                x if x == 180.0 => (0.0, -1.0),
                x if x == 270.0 => (-1.0, 0.0),
                _ => (a.sin(), a.cos()),
            };
            LoadProgram {
                initial_state: InternalState::with_polarization(Vector3::new(ps * sin, 0.0, ps * cos)),
                segments: vec![Segment::electric(2.0 * ec, 2 * n), Segment::electric(0.0, 2 * n)],
                ..Default::default()
            }
        }
    };
    Ok(prog)
}
