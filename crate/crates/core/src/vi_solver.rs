//! Point-level incremental variational inequality.
//!
//! One load increment at a material point solves for the new remanent
//! polarization `P_I` and the multipliers `λ_P` (length of the polarization
//! increment) and `λ_S` (saturation back-field). For a fixed guess of the
//! active sets the conditions are a small nonlinear system solved by Newton's
//! method; the active sets are then updated by the rules in
//! [`update_active_sets`] until they stop changing.
//!
//! Unknowns are ordered `y = (P_1, P_2, P_3, λ_P, λ_S)`. Rows are scaled by
//! `1/P_sat` (polarization-like) or `1/E_C` (field-like) so one relative
//! tolerance governs all of them.

use nalgebra::{Matrix3, SMatrix, Vector3, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::tensors::SymTensor2;

pub type Matrix5 = SMatrix<f64, 5, 5>;
pub type Matrix5x3 = SMatrix<f64, 5, 3>;
pub type Matrix3x5 = SMatrix<f64, 3, 5>;

/// Membership of a point in the switching set `A_P` and the saturation set `A_S`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveFlags {
    pub switching: bool,
    pub saturation: bool,
}

impl ActiveFlags {
    pub const INACTIVE: ActiveFlags = ActiveFlags { switching: false, saturation: false };

    pub fn label(&self) -> &'static str {
        match (self.switching, self.saturation) {
            (false, false) => "-",
            (true, false) => "P",
            (false, true) => "S",
            (true, true) => "PS",
        }
    }
}

/// Dissipative state carried from one increment to the next.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InternalState {
    /// Remanent polarization, C/m².
    pub pol: Vector3<f64>,
    /// Length of the last polarization increment, C/m².
    pub lambda_p: f64,
    /// Saturation back-field, V/m.
    pub lambda_s: f64,
    pub active: ActiveFlags,
}

impl InternalState {
    pub fn virgin() -> Self {
        Self::default()
    }

    pub fn with_polarization(pol: Vector3<f64>) -> Self {
        InternalState { pol, ..Self::default() }
    }

    pub fn unknowns(&self) -> Vector5<f64> {
        Vector5::new(self.pol[0], self.pol[1], self.pol[2], self.lambda_p, self.lambda_s)
    }

    pub fn from_unknowns(y: &Vector5<f64>, active: ActiveFlags) -> Self {
        InternalState {
            pol: Vector3::new(y[0], y[1], y[2]),
            lambda_p: y[3],
            lambda_s: y[4],
            active,
        }
    }
}

/// Stress and electric field prescribed at the end of an increment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointControls {
    /// Pa, true shears.
    pub stress: SymTensor2,
    /// V/m
    pub field: Vector3<f64>,
}

impl PointControls {
    pub fn new(stress: SymTensor2, field: Vector3<f64>) -> Self {
        PointControls { stress, field }
    }

    pub fn electric(field: Vector3<f64>) -> Self {
        PointControls { stress: SymTensor2::ZERO, field }
    }

    pub fn is_finite(&self) -> bool {
        self.stress.is_finite() && self.field.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Bound on the scaled residual (max norm).
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Switching threshold on `f_P`, V/m.
    pub delta_p: f64,
    /// Saturation threshold on `f_S`, C/m².
    pub delta_s: f64,
    pub max_active_loops: usize,
    /// `|Ê|` below this fraction of `E_C` on an active switching set is degenerate.
    pub direction_tol: f64,
}

impl SolverSettings {
    pub fn for_material(p: &MaterialParams) -> Self {
        SolverSettings {
            newton_tol: 1e-10,
            newton_max_iter: 50,
            delta_p: 1e-3 * p.coercive_field,
            delta_s: 1e-3 * p.saturation_polarization,
            max_active_loops: 10,
            direction_tol: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.newton_tol > 0.0
            && self.newton_max_iter > 0
            && self.delta_p > 0.0
            && self.delta_s > 0.0
            && self.max_active_loops > 0
            && self.direction_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("solver settings must be positive: {self:?}")))
        }
    }

    /// Threshold for `λ_P` when removing a point from `A_P`, expressed with the
    /// same relative size as `δ_P`.
    pub fn lambda_p_threshold(&self, p: &MaterialParams) -> f64 {
        self.delta_p / p.coercive_field * p.saturation_polarization
    }

    /// Threshold for `λ_S` when removing a point from `A_S`.
    pub fn lambda_s_threshold(&self, p: &MaterialParams) -> f64 {
        self.delta_s / p.saturation_polarization * p.coercive_field
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementResult {
    pub state: InternalState,
    pub delta_pol: Vector3<f64>,
    /// End-of-step driving force, V/m.
    pub driving_force: Vector3<f64>,
    /// `Ê·ΔP_I`, J/m³.
    pub dissipation: f64,
    pub newton_iterations: usize,
    pub active_loops: usize,
    pub converged: bool,
}

/// Local residual split into its value and the derivatives with respect to
/// the unknowns at fixed `Ê` and with respect to `Ê`.
#[derive(Clone, Debug)]
pub struct LocalSystem {
    pub residual: Vector5<f64>,
    pub d_unknowns: Matrix5,
    pub d_driving_force: Matrix5x3,
}

/// Evaluates the KKT residual of one point for given `Ê`.
///
/// `prev_pol` is the polarization at the start of the increment and `y` the
/// current guess `(P, λ_P, λ_S)`.
pub fn local_system(
    prev_pol: &Vector3<f64>,
    y: &Vector5<f64>,
    flags: ActiveFlags,
    ehat: &Vector3<f64>,
    p: &MaterialParams,
    s: &SolverSettings,
) -> Result<LocalSystem> {
    let psat = p.saturation_polarization;
    let ec = p.coercive_field;
    let pol = Vector3::new(y[0], y[1], y[2]);
    let (lambda_p, lambda_s) = (y[3], y[4]);
    let dp = pol - prev_pol;

    let mut r = Vector5::zeros();
    let mut jy = Matrix5::zeros();
    let mut je = Matrix5x3::zeros();
    for i in 0..3 {
        jy[(i, i)] = 1.0 / psat;
    }

    if flags.switching {
        let mag = ehat.norm();
        if mag < s.direction_tol * ec {
            return Err(Error::DegenerateDirection { magnitude: mag });
        }
        let n = ehat / mag;
        let proj = (Matrix3::identity() - n * n.transpose()) / mag;
        let rp = (dp - n * lambda_p) / psat;
        for i in 0..3 {
            r[i] = rp[i];
            jy[(i, 3)] = -n[i] / psat;
        }
        je.fixed_view_mut::<3, 3>(0, 0).copy_from(&(proj * (-lambda_p / psat)));
        r[3] = (mag - ec) / ec;
        je.fixed_view_mut::<1, 3>(3, 0).copy_from(&(n.transpose() / ec));
    } else {
        for i in 0..3 {
            r[i] = dp[i] / psat;
        }
        r[3] = lambda_p / psat;
        jy[(3, 3)] = 1.0 / psat;
    }

    if flags.switching && flags.saturation {
        let mag = pol.norm();
        if mag == 0.0 {
            return Err(Error::SingularMatrix { context: "saturation row at zero polarization".into() });
        }
        r[4] = (mag - psat) / psat;
        let e = pol / mag;
        for i in 0..3 {
            jy[(4, i)] = e[i] / psat;
        }
    } else {
        r[4] = lambda_s / ec;
        jy[(4, 4)] = 1.0 / ec;
    }

    Ok(LocalSystem { residual: r, d_unknowns: jy, d_driving_force: je })
}

/// `∂Ê/∂y` at a material point with prescribed stress and field.
fn driving_force_map(ctrl: &PointControls, y: &Vector5<f64>, p: &MaterialParams) -> (Vector3<f64>, Matrix3x5) {
    let pol = Vector3::new(y[0], y[1], y[2]);
    let ehat = p.driving_force(&ctrl.stress, &ctrl.field, &pol, y[4]);
    let jac = p.driving_force_jacobian(&ctrl.stress, &ctrl.field, &pol, y[4]);
    let mut map = Matrix3x5::zeros();
    map.fixed_view_mut::<3, 3>(0, 0).copy_from(&jac);
    map.set_column(4, &(-p.saturation_gradient(&pol)));
    (ehat, map)
}

/// Scaled KKT residual of `trial` (whose flags select the active sets).
pub fn kkt_residual(
    prev: &InternalState,
    trial: &InternalState,
    ctrl: &PointControls,
    p: &MaterialParams,
    s: &SolverSettings,
) -> Result<Vector5<f64>> {
    let y = trial.unknowns();
    let ehat = p.driving_force(&ctrl.stress, &ctrl.field, &trial.pol, trial.lambda_s);
    Ok(local_system(&prev.pol, &y, trial.active, &ehat, p, s)?.residual)
}

/// Analytic derivative of [`kkt_residual`] with respect to `(P, λ_P, λ_S)`.
pub fn kkt_jacobian(
    prev: &InternalState,
    trial: &InternalState,
    ctrl: &PointControls,
    p: &MaterialParams,
    s: &SolverSettings,
) -> Result<Matrix5> {
    let y = trial.unknowns();
    let (ehat, map) = driving_force_map(ctrl, &y, p);
    let ls = local_system(&prev.pol, &y, trial.active, &ehat, p, s)?;
    Ok(ls.d_unknowns + ls.d_driving_force * map)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOutcome {
    pub state: InternalState,
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Newton solve for fixed active sets, starting from `prev`.
pub fn newton_solve_fixed_active(
    prev: &InternalState,
    ctrl: &PointControls,
    flags: ActiveFlags,
    p: &MaterialParams,
    s: &SolverSettings,
) -> Result<NewtonOutcome> {
    let start = InternalState { lambda_p: 0.0, active: flags, ..*prev };
    newton_solve_from(prev, &start, ctrl, p, s)
}

/// Newton solve for the active sets of `start`, starting from its values.
pub fn newton_solve_from(
    prev: &InternalState,
    start: &InternalState,
    ctrl: &PointControls,
    p: &MaterialParams,
    s: &SolverSettings,
) -> Result<NewtonOutcome> {
    let flags = start.active;
    let residual_at = |y: &Vector5<f64>| -> Result<Vector5<f64>> {
        let trial = InternalState::from_unknowns(y, flags);
        kkt_residual(prev, &trial, ctrl, p, s)
    };
    let mut y = start.unknowns();
    let mut r = residual_at(&y)?;
    let mut norm = r.amax();
    let mut iterations = 0;
    while norm > s.newton_tol && iterations < s.newton_max_iter {
        let trial = InternalState::from_unknowns(&y, flags);
        let jac = kkt_jacobian(prev, &trial, ctrl, p, s)?;
        let step = jac.lu().solve(&r).ok_or_else(|| Error::SingularMatrix {
            context: format!("local Newton with active sets {}", flags.label()),
        })?;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=20 {
            let cand = y - step * alpha;
            if let Ok(rc) = residual_at(&cand) {
                if rc.amax() < norm || alpha < 1.0 / 1048576.0 {
                    accepted = Some((cand, rc));
                    break;
                }
            }
            alpha *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((cand, rc)) => {
                y = cand;
                r = rc;
                norm = r.amax();
            }
            None => break,
        }
    }
    Ok(NewtonOutcome {
        state: InternalState::from_unknowns(&y, flags),
        converged: norm <= s.newton_tol,
        iterations,
        residual_norm: norm,
    })
}

/// Applies the active-set rules once and reports whether anything changed.
///
/// A point leaves `A_P` when it is not saturated and `λ_P` is below its
/// threshold; it enters `A_P` when `f_P > δ_P`. It enters `A_S` when it is
/// switching and `f_S > δ_S`, and leaves `A_S` when `λ_S` is below its
/// threshold.
pub fn update_active_sets(trial: &InternalState, ehat: &Vector3<f64>, p: &MaterialParams, s: &SolverSettings) -> (ActiveFlags, bool) {
    update_active_sets_guarded(trial, ehat, p, s, &mut RemovalGuard::default())
}

/// Removals already made within one increment.
///
/// A point that was taken out of a set once and re-entered it keeps its
/// membership as long as the multiplier is non-negative. Small positive
/// multipliers below the removal threshold otherwise make the loop alternate
/// when the trial violation lies between `δ_P` and the threshold times the
/// local stiffness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RemovalGuard {
    pub switching: bool,
    pub saturation: bool,
}

pub fn update_active_sets_guarded(
    trial: &InternalState,
    ehat: &Vector3<f64>,
    p: &MaterialParams,
    s: &SolverSettings,
    guard: &mut RemovalGuard,
) -> (ActiveFlags, bool) {
    let old = trial.active;
    let mut flags = old;
    if flags.switching && !flags.saturation && trial.lambda_p < s.lambda_p_threshold(p) {
        if !(guard.switching && trial.lambda_p >= 0.0) {
            flags.switching = false;
            guard.switching = true;
        }
    } else if !flags.switching && p.switching_fn(ehat) > s.delta_p {
        flags.switching = true;
    }
    if !flags.saturation && flags.switching && p.saturation_fn(&trial.pol) > s.delta_s {
        flags.saturation = true;
    } else if flags.saturation && trial.lambda_s < s.lambda_s_threshold(p) && !(guard.saturation && trial.lambda_s >= 0.0) {
        flags.saturation = false;
        guard.saturation = true;
    }
    (flags, flags != old)
}

/// Solves one load increment: the active-set loop around fixed-set Newton solves.
///
/// The loop starts from empty active sets. With `ΔP_I = 0` on a saturated
/// point the saturation multiplier is not unique, and starting from the
/// previous sets can retain a spurious positive `λ_S`; the empty start picks
/// the smallest one.
pub fn solve_increment(prev: &InternalState, ctrl: &PointControls, p: &MaterialParams, s: &SolverSettings) -> Result<IncrementResult> {
    if !ctrl.is_finite() {
        return Err(Error::InvalidParameter("non-finite point controls".into()));
    }
    let mut current = InternalState { lambda_p: 0.0, active: ActiveFlags::INACTIVE, ..*prev };
    let mut history = vec![current.active.label()];
    let mut newton_iterations = 0;
    let mut loops = 0;
    let mut guard = RemovalGuard::default();
    loop {
        loops += 1;
        let out = newton_solve_from(prev, &current, ctrl, p, s)?;
        newton_iterations += out.iterations;
        current = out.state;
        let ehat = p.driving_force(&ctrl.stress, &ctrl.field, &current.pol, current.lambda_s);
        let (flags, changed) = update_active_sets_guarded(&current, &ehat, p, s, &mut guard);
        if !changed || !out.converged {
            let delta_pol = current.pol - prev.pol;
            return Ok(IncrementResult {
                state: current,
                delta_pol,
                driving_force: ehat,
                dissipation: ehat.dot(&delta_pol),
                newton_iterations,
                active_loops: loops,
                converged: out.converged,
            });
        }
        history.push(flags.label());
        if loops >= s.max_active_loops {
            return Err(Error::ActiveSetCycling { loops, history: history.join(" -> ") });
        }
        current.active = flags;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn setup() -> (MaterialParams, SolverSettings) {
        let p = MaterialParams::table1();
        let s = SolverSettings::for_material(&p);
        (p, s)
    }

    fn ez(v: f64) -> PointControls {
        PointControls::electric(Vector3::new(0.0, 0.0, v))
    }

    fn fd_jacobian(prev: &InternalState, trial: &InternalState, ctrl: &PointControls, p: &MaterialParams, s: &SolverSettings) -> Matrix5 {
        let y = trial.unknowns();
        let scales = [p.saturation_polarization, p.saturation_polarization, p.saturation_polarization, p.saturation_polarization, p.coercive_field];
        let mut jac = Matrix5::zeros();
        for j in 0..5 {
            let h = 1e-7 * scales[j];
            let mut a = y;
            let mut b = y;
            a[j] += h;
            b[j] -= h;
            let ra = kkt_residual(prev, &InternalState::from_unknowns(&a, trial.active), ctrl, p, s).unwrap();
            let rb = kkt_residual(prev, &InternalState::from_unknowns(&b, trial.active), ctrl, p, s).unwrap();
            jac.set_column(j, &((ra - rb) / (2.0 * h)));
        }
        jac
    }

    #[test]
    fn elastic_step_has_zero_residual() {
        let (p, s) = setup();
        let prev = InternalState::virgin();
        let r = kkt_residual(&prev, &prev, &ez(0.5e6), &p, &s).unwrap();
        assert_eq!(r, Vector5::zeros());
        let out = newton_solve_fixed_active(&prev, &ez(0.5e6), ActiveFlags::INACTIVE, &p, &s).unwrap();
        assert!(out.converged && out.iterations <= 1);
    }

    #[test]
    fn inactive_jacobian_is_scaled_identity() {
        let (p, s) = setup();
        let prev = InternalState::virgin();
        let jac = kkt_jacobian(&prev, &prev, &ez(0.3e6), &p, &s).unwrap();
        let expected = Matrix5::from_diagonal(&Vector5::new(
            1.0 / p.saturation_polarization,
            1.0 / p.saturation_polarization,
            1.0 / p.saturation_polarization,
            1.0 / p.saturation_polarization,
            1.0 / p.coercive_field,
        ));
        assert_eq!(jac, expected);
    }

    #[test]
    fn switching_root_matches_closed_form() {
        let (p, s) = setup();
        let flags = ActiveFlags { switching: true, saturation: false };
        let out = newton_solve_fixed_active(&InternalState::virgin(), &ez(1.2e6), flags, &p, &s).unwrap();
        assert!(out.converged && out.iterations <= 10);
        assert!((out.state.pol[2] - 0.1).abs() < 1e-12);
        assert!((out.state.lambda_p - 0.1).abs() < 1e-12);
        assert!(out.state.pol[0].abs() < 1e-15 && out.state.pol[1].abs() < 1e-15);
    }

    #[test]
    fn electric_jacobian_block() {
        let (p, s) = setup();
        let prev = InternalState::virgin();
        let trial = InternalState {
            pol: Vector3::new(0.01, 0.02, 0.1),
            lambda_p: 0.1,
            lambda_s: 0.0,
            active: ActiveFlags { switching: true, saturation: false },
        };
        let ctrl = ez(1.5e6);
        let jac = kkt_jacobian(&prev, &trial, &ctrl, &p, &s).unwrap();
        let ehat = ctrl.field - trial.pol * p.hardening;
        let mag = ehat.norm();
        let n = ehat / mag;
        let proj = (Matrix3::identity() - n * n.transpose()) / mag;
        let ps = p.saturation_polarization;
        let block = Matrix3::identity() / ps + proj * (trial.lambda_p * p.hardening / ps);
        assert!((jac.fixed_view::<3, 3>(0, 0) - block).abs().max() < 1e-9 * block.abs().max());
        let row = -n.transpose() * p.hardening / p.coercive_field;
        assert!((jac.fixed_view::<1, 3>(3, 0) - row).abs().max() < 1e-12);
    }

    #[test]
    fn one_step_poling_saturates_in_three_loops() {
        let (p, s) = setup();
        let res = solve_increment(&InternalState::virgin(), &ez(2.0e6), &p, &s).unwrap();
        assert!(res.converged);
        assert!((res.state.pol[2] - p.saturation_polarization).abs() < 1e-12);
        assert!((res.state.lambda_s - 0.4e6).abs() < 1e-3);
        assert!(res.active_loops <= 3);
        assert_eq!(res.state.active, ActiveFlags { switching: true, saturation: true });
        assert!((res.dissipation - p.coercive_field * p.saturation_polarization).abs() < 1e-3);
    }

    #[test]
    fn unloading_keeps_remanent_polarization() {
        let (p, s) = setup();
        let poled = solve_increment(&InternalState::virgin(), &ez(2.0e6), &p, &s).unwrap().state;
        let res = solve_increment(&poled, &ez(0.0), &p, &s).unwrap();
        assert!((res.state.pol[2] - p.saturation_polarization).abs() < 1e-14);
        assert!(res.state.lambda_p.abs() < 1e-12);
        assert!(res.state.lambda_s.abs() < 1e-6);
        assert_eq!(res.state.active, ActiveFlags::INACTIVE);
        assert!(res.dissipation.abs() < 1e-9);
    }

    #[test]
    fn below_coercive_field_stays_virgin() {
        let (p, s) = setup();
        let res = solve_increment(&InternalState::virgin(), &ez(0.999e6), &p, &s).unwrap();
        assert_eq!(res.state, InternalState::virgin());
        assert_eq!(res.active_loops, 1);
    }

    #[test]
    fn rule_application() {
        let (p, s) = setup();
        let virgin = InternalState::virgin();
        let (f, changed) = update_active_sets(&virgin, &Vector3::new(0.0, 0.0, 0.999e6), &p, &s);
        assert!(!changed && f == ActiveFlags::INACTIVE);
        let ehat = Vector3::new(0.0, 0.0, p.coercive_field + 2.0 * s.delta_p);
        let (f, changed) = update_active_sets(&virgin, &ehat, &p, &s);
        assert!(changed && f.switching && !f.saturation);
        let st = InternalState {
            pol: Vector3::new(0.0, 0.0, 0.1),
            lambda_p: 0.5 * s.lambda_p_threshold(&p),
            lambda_s: 0.0,
            active: ActiveFlags { switching: true, saturation: false },
        };
        let (f, changed) = update_active_sets(&st, &Vector3::new(0.0, 0.0, p.coercive_field), &p, &s);
        assert!(changed && f == ActiveFlags::INACTIVE);
        let sat = InternalState {
            pol: Vector3::new(0.0, 0.0, p.saturation_polarization),
            lambda_p: 0.0,
            lambda_s: 0.5 * s.lambda_s_threshold(&p),
            active: ActiveFlags { switching: true, saturation: true },
        };
        let (f, changed) = update_active_sets(&sat, &Vector3::new(0.0, 0.0, p.coercive_field), &p, &s);
        assert!(changed && f == ActiveFlags { switching: true, saturation: false });
    }

    #[test]
    fn degenerate_direction_is_reported() {
        let (p, s) = setup();
        let trial = InternalState { active: ActiveFlags { switching: true, saturation: false }, ..InternalState::virgin() };
        let err = kkt_residual(&InternalState::virgin(), &trial, &ez(0.0), &p, &s).unwrap_err();
        assert!(matches!(err, Error::DegenerateDirection { .. }));
    }

    #[test]
    fn invalid_settings_rejected() {
        let (p, mut s) = setup();
        assert!(s.validate().is_ok());
        s.delta_p = 0.0;
        assert!(s.validate().is_err());
        let _ = p;
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn jacobian_matches_differences(
            raw in prop::array::uniform12(-1.0f64..1.0),
            flag in 0usize..3,
        ) {
            let (p, s) = setup();
            let ps = p.saturation_polarization;
            let active = match flag {
                0 => ActiveFlags::INACTIVE,
                1 => ActiveFlags { switching: true, saturation: false },
                _ => ActiveFlags { switching: true, saturation: true },
            };
            let prev = InternalState::with_polarization(Vector3::new(raw[0], raw[1], raw[2]) * 0.3 * ps);
            let dir = Vector3::new(raw[3], raw[4], raw[5]);
            prop_assume!(dir.norm() > 0.1);
            let pol = dir.normalize() * ps * (0.2 + 0.8 * raw[6].abs());
            let trial = InternalState { pol, lambda_p: raw[7].abs() * ps, lambda_s: raw[8].abs() * 1e6, active };
            let ctrl = PointControls::new(
                SymTensor2([raw[9] * 30e6, -raw[10] * 20e6, raw[11] * 40e6, 5e6, -3e6, 2e6]),
                Vector3::new(raw[10], raw[11], raw[9]) * 2.5e6,
            );
            let ehat = p.driving_force(&ctrl.stress, &ctrl.field, &trial.pol, trial.lambda_s);
            prop_assume!(ehat.norm() > 0.05 * p.coercive_field);
            let jac = kkt_jacobian(&prev, &trial, &ctrl, &p, &s).unwrap();
            let fd = fd_jacobian(&prev, &trial, &ctrl, &p, &s);
            for i in 0..5 {
                let scale = jac.row(i).amax().max(fd.row(i).amax()).max(1e-300);
                prop_assert!((jac.row(i) - fd.row(i)).amax() <= 1e-5 * scale, "row {i}: {} vs {}", jac.row(i), fd.row(i));
            }
        }

        #[test]
        fn increments_dissipate_and_respect_bounds(
            raw in prop::array::uniform9(-1.0f64..1.0),
        ) {
            let (p, s) = setup();
            let ps = p.saturation_polarization;
            let prev = InternalState::with_polarization(Vector3::new(raw[0], raw[1], raw[2]) * 0.55 * ps);
            let ctrl = PointControls::new(
                SymTensor2([raw[6] * 20e6, 0.0, raw[7] * 20e6, 0.0, raw[8] * 5e6, 0.0]),
                Vector3::new(raw[3], raw[4], raw[5]) * 2.5e6,
            );
            let res = solve_increment(&prev, &ctrl, &p, &s).unwrap();
            prop_assert!(res.converged);
            prop_assert!(res.dissipation >= -1e-12 * p.coercive_field * ps);
            prop_assert!(res.state.pol.norm() <= ps + s.delta_s);
            prop_assert!(res.state.lambda_p >= -s.lambda_p_threshold(&p));
            prop_assert!(res.state.lambda_s >= -s.lambda_s_threshold(&p));
            prop_assert!(p.switching_fn(&res.driving_force) <= s.delta_p);
            if res.state.active.switching && !res.state.active.saturation {
                let dp = res.delta_pol;
                prop_assert!((dp.norm() - res.state.lambda_p).abs() <= 1e-8 * res.state.lambda_p.max(ps * 1e-6));
                prop_assert!((dp.normalize() - res.driving_force.normalize()).norm() <= 1e-8);
            }
        }
    }
}
