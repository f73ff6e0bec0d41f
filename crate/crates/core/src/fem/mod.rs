//! Structured-mesh finite elements for the coupled balance equations with the
//! polarization law enforced element by element.
//!
//! Nodal unknowns are displacements and the electric potential; every element
//! carries its own remanent polarization and multipliers. One load step runs
//! the active-set loop over all elements at once: with the sets frozen, a
//! monolithic Newton iteration solves balance and local conditions together,
//! condensing the local unknowns element by element. The sets are then updated
//! per element and the step is repeated until none of them changes.

pub mod band;
pub mod benchmark;
pub mod element;
pub mod mesh;

use nalgebra::{SMatrix, Vector3, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::tensors::SymTensor2;
use crate::vi_solver::{local_system, update_active_sets_guarded, ActiveFlags, InternalState, Matrix5, RemovalGuard, SolverSettings};

use band::BandMatrix;
use element::{ElemVector, DOFS_PER_NODE, ELEMENT_DOFS};
pub use mesh::Mesh;

/// Displacement components and the potential at a node.
pub const UX: usize = 0;
pub const UY: usize = 1;
pub const UZ: usize = 2;
pub const PHI: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeSettings {
    pub local: SolverSettings,
    /// Relative bound on the out-of-balance forces and charges.
    pub residual_tol: f64,
    pub max_newton: usize,
}

impl FeSettings {
    pub fn for_material(p: &MaterialParams) -> Self {
        let mut local = SolverSettings::for_material(p);
        local.max_active_loops = 30;
        FeSettings { local, residual_tol: 1e-9, max_newton: 40 }
    }

    pub fn validate(&self) -> Result<()> {
        self.local.validate()?;
        if !(self.residual_tol > 0.0) || self.max_newton == 0 {
            return Err(Error::InvalidParameter("global tolerance and iteration limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub active_loops: usize,
    pub newton_iterations: usize,
    /// Final merit: worst residual relative to its tolerance.
    pub merit: f64,
    /// `Σ Ê·ΔP_I V`, J.
    pub dissipation: f64,
    pub switching_elements: usize,
    pub saturated_elements: usize,
    /// Converged sub-steps the step was split into.
    pub substeps: usize,
}

/// Gauss-point averages of one element.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementFields {
    pub stress: SymTensor2,
    pub strain: SymTensor2,
    pub field: Vector3<f64>,
    pub displacement: Vector3<f64>,
    pub pol: Vector3<f64>,
    pub driving_force: Vector3<f64>,
}

#[derive(Clone, Debug)]
pub struct FeModel {
    pub mesh: Mesh,
    pub material: MaterialParams,
    pub settings: FeSettings,
    /// Nodal values, `4 n + c` with `c` one of [`UX`], [`UY`], [`UZ`], [`PHI`].
    pub dofs: Vec<f64>,
    pub states: Vec<InternalState>,
    prescribed: Vec<Option<f64>>,
    loads: Vec<f64>,
    steps_done: usize,
}

/// Per-element pieces of the linearization kept for back-substitution.
struct Condensed {
    ll_inv: Matrix5,
    l_a: SMatrix<f64, 5, ELEMENT_DOFS>,
    r_l: Vector5<f64>,
}

struct Linearization {
    /// Out-of-balance values on all dofs.
    residual: Vec<f64>,
    magnitude: Vec<f64>,
    local_max: f64,
    worst_element: usize,
    condensed: Vec<Condensed>,
    matrix: Option<(BandMatrix, Vec<f64>)>,
}

/// Polarization beyond this multiple of `P_sat` on an unsaturated switching
/// element ends a Newton solve early.
const OVERSHOOT: f64 = 1.5;
const MAX_RESCUES: usize = 2;

impl FeModel {
    pub fn new(mesh: Mesh, material: MaterialParams, settings: FeSettings) -> Self {
        let nd = DOFS_PER_NODE * mesh.n_nodes();
        let ne = mesh.n_elements();
        FeModel {
            mesh,
            material,
            settings,
            dofs: vec![0.0; nd],
            states: vec![InternalState::virgin(); ne],
            prescribed: vec![None; nd],
            loads: vec![0.0; nd],
            steps_done: 0,
        }
    }

    pub fn dof(node: usize, component: usize) -> usize {
        DOFS_PER_NODE * node + component
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    /// Prescribes `value` on a dof for the next steps.
    pub fn fix(&mut self, dof: usize, value: f64) {
        self.prescribed[dof] = Some(value);
    }

    pub fn release(&mut self, dof: usize) {
        self.prescribed[dof] = None;
    }

    pub fn prescribed(&self, dof: usize) -> Option<f64> {
        self.prescribed[dof]
    }

    /// External nodal force (N) or charge (C) on a dof.
    pub fn set_load(&mut self, dof: usize, value: f64) {
        self.loads[dof] = value;
    }

    pub fn load(&self, dof: usize) -> f64 {
        self.loads[dof]
    }

    pub fn clear_loads(&mut self) {
        self.loads.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds consistent nodal forces of a uniform traction on a boundary face.
    pub fn add_face_traction(&mut self, axis: usize, side: usize, traction: [f64; 3]) {
        for (n, f) in self.mesh.face_traction_loads(axis, side, traction) {
            for c in 0..3 {
                self.loads[Self::dof(n, c)] += f[c];
            }
        }
    }

    pub fn set_polarization(&mut self, pol: impl Fn(usize) -> Vector3<f64>) {
        for (e, st) in self.states.iter_mut().enumerate() {
            *st = InternalState::with_polarization(pol(e));
        }
    }

    fn element_dofs(&self, e: usize) -> [usize; ELEMENT_DOFS] {
        let nodes = self.mesh.element_nodes(e);
        std::array::from_fn(|i| DOFS_PER_NODE * nodes[i / DOFS_PER_NODE] + i % DOFS_PER_NODE)
    }

    fn gather(&self, a: &[f64], e: usize) -> ElemVector {
        let map = self.element_dofs(e);
        ElemVector::from_fn(|i, _| a[map[i]])
    }

    /// Compact numbering of the free dofs and the half bandwidth it produces.
    fn free_numbering(&self) -> (Vec<Option<usize>>, usize, usize) {
        let mut next = 0;
        let map: Vec<Option<usize>> = self
            .prescribed
            .iter()
            .map(|p| {
                if p.is_some() {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect();
        let mut band = 0;
        for e in 0..self.mesh.n_elements() {
            let ids: Vec<usize> = self.element_dofs(e).iter().filter_map(|&d| map[d]).collect();
            if let (Some(lo), Some(hi)) = (ids.iter().min(), ids.iter().max()) {
                band = band.max(hi - lo);
            }
        }
        (map, next, band)
    }

    /// Reference force and charge used as floors in the convergence test.
    fn reference_scales(&self) -> (f64, f64) {
        let ne = self.mesh.n_elements() as f64;
        let vol: f64 = (0..self.mesh.n_elements()).map(|e| self.mesh.element_volume(e)).sum::<f64>() / ne;
        let area = vol.powf(2.0 / 3.0);
        let p = &self.material;
        (p.youngs_modulus * p.saturation_strain * area, p.saturation_polarization * area)
    }

    fn linearize(
        &self,
        a: &[f64],
        ys: &[Vector5<f64>],
        flags: &[ActiveFlags],
        numbering: Option<&(Vec<Option<usize>>, usize, usize)>,
    ) -> Result<Linearization> {
        let p = &self.material;
        let s = &self.settings.local;
        let nd = self.n_dofs();
        let mut residual: Vec<f64> = self.loads.iter().map(|f| -f).collect();
        let mut magnitude: Vec<f64> = self.loads.iter().map(|f| f.abs()).collect();
        let mut matrix = numbering.map(|(_, n, band)| (BandMatrix::zeros(*n, *band, *band), vec![0.0; *n]));
        let mut condensed = Vec::with_capacity(self.mesh.n_elements());
        let mut local_max = 0.0;
        let mut worst_element = 0;
        for e in 0..self.mesh.n_elements() {
            let map = self.element_dofs(e);
            let ae = self.gather(a, e);
            let y = ys[e];
            let pol = Vector3::new(y[0], y[1], y[2]);
            let ev = element::evaluate(self.mesh.element_size(e), &ae, &pol, y[4], p);
            let ls = local_system(&self.states[e].pol, &y, flags[e], &ev.driving_force, p, s)?;
            let mut map_y = SMatrix::<f64, 3, 5>::zeros();
            map_y.fixed_view_mut::<3, 3>(0, 0).copy_from(&ev.dehat_dp);
            map_y.set_column(4, &(-p.saturation_gradient(&pol)));
            let k_ll = ls.d_unknowns + ls.d_driving_force * map_y;
            let ll_inv = k_ll.try_inverse().ok_or_else(|| Error::SingularMatrix { context: format!("local block of element {e}") })?;
            let l_a = ls.d_driving_force * ev.dehat_da;
            let lm = ls.residual.amax();
            if lm > local_max {
                local_max = lm;
                worst_element = e;
            }
            for i in 0..ELEMENT_DOFS {
                residual[map[i]] += ev.residual[i];
                magnitude[map[i]] += ev.residual[i].abs();
            }
            if let (Some((m, rhs)), Some((free, _, _))) = (matrix.as_mut(), numbering) {
                let mut k_ay = SMatrix::<f64, ELEMENT_DOFS, 5>::zeros();
                k_ay.fixed_view_mut::<ELEMENT_DOFS, 3>(0, 0).copy_from(&ev.k_ap);
                let coupling = k_ay * ll_inv;
                let k_star = ev.k_aa - coupling * l_a;
                let r_corr = coupling * ls.residual;
                for i in 0..ELEMENT_DOFS {
                    let Some(fi) = free[map[i]] else { continue };
                    rhs[fi] += r_corr[i];
                    for j in 0..ELEMENT_DOFS {
                        if let Some(fj) = free[map[j]] {
                            m.add(fi, fj, k_star[(i, j)]);
                        }
                    }
                }
            }
            condensed.push(Condensed { ll_inv, l_a, r_l: ls.residual });
        }
        if let (Some((_, rhs)), Some((free, _, _))) = (matrix.as_mut(), numbering) {
            // rhs = -(R - K_ay K_ll^-1 R_l)
            for d in 0..nd {
                if let Some(f) = free[d] {
                    rhs[f] -= residual[d];
                }
            }
        }
        Ok(Linearization { residual, magnitude, local_max, worst_element, condensed, matrix })
    }

    /// Inverse residual scales of the free dofs at `lin`.
    fn residual_weights(&self, lin: &Linearization) -> Vec<f64> {
        let (force_ref, charge_ref) = self.reference_scales();
        let tol = self.settings.residual_tol;
        (0..self.n_dofs())
            .map(|d| {
                if self.prescribed[d].is_some() {
                    return 0.0;
                }
                let floor = if d % DOFS_PER_NODE == PHI { charge_ref } else { force_ref };
                1.0 / (tol * (lin.magnitude[d] + floor))
            })
            .collect()
    }

    fn squared_residual(&self, lin: &Linearization, weights: &[f64]) -> f64 {
        let global: f64 = lin.residual.iter().zip(weights).map(|(r, w)| (r * w).powi(2)).sum();
        let tol = self.settings.local.newton_tol;
        let local: f64 = lin.condensed.iter().map(|c| c.r_l.norm_squared()).sum();
        global + local / (tol * tol)
    }

    fn merit(&self, lin: &Linearization) -> (f64, usize) {
        let (force_ref, charge_ref) = self.reference_scales();
        let tol = self.settings.residual_tol;
        let mut worst = 0.0;
        let mut worst_dof = 0;
        for d in 0..self.n_dofs() {
            if self.prescribed[d].is_some() {
                continue;
            }
            let floor = if d % DOFS_PER_NODE == PHI { charge_ref } else { force_ref };
            let v = lin.residual[d].abs() / (tol * (lin.magnitude[d] + floor));
            if v > worst {
                worst = v;
                worst_dof = d;
            }
        }
        (worst.max(lin.local_max / self.settings.local.newton_tol), worst_dof)
    }

    /// Newton iteration on the local conditions of element `e` for fixed
    /// nodal values. Returns false when it does not converge.
    fn local_newton(&self, e: usize, ae: &ElemVector, y: &mut Vector5<f64>, flags: ActiveFlags) -> bool {
        let p = &self.material;
        let s = &self.settings.local;
        let h = self.mesh.element_size(e);
        let prev = self.states[e].pol;
        let system = |y: &Vector5<f64>| -> Result<(Vector5<f64>, Matrix5)> {
            let pol = Vector3::new(y[0], y[1], y[2]);
            let ev = element::evaluate(h, ae, &pol, y[4], p);
            let ls = local_system(&prev, y, flags, &ev.driving_force, p, s)?;
            let mut map_y = SMatrix::<f64, 3, 5>::zeros();
            map_y.fixed_view_mut::<3, 3>(0, 0).copy_from(&ev.dehat_dp);
            map_y.set_column(4, &(-p.saturation_gradient(&pol)));
            Ok((ls.residual, ls.d_unknowns + ls.d_driving_force * map_y))
        };
        let Ok((mut r, mut jac)) = system(y) else { return false };
        for _ in 0..s.newton_max_iter {
            let norm = r.amax();
            if norm <= s.newton_tol {
                return true;
            }
            let Some(step) = jac.lu().solve(&r) else { return false };
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=20 {
                let cand = *y - step * alpha;
                if let Ok((rc, jc)) = system(&cand) {
                    if rc.amax() < norm || alpha < 1.0 / 1048576.0 {
                        accepted = Some((cand, rc, jc));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((cand, rc, jc)) = accepted else { return false };
            *y = cand;
            r = rc;
            jac = jc;
        }
        r.amax() <= s.newton_tol
    }

    /// Solves the local conditions of element `e` for fixed nodal values.
    fn relax_element(&self, e: usize, ae: &ElemVector, y: &mut Vector5<f64>, flags: ActiveFlags) -> bool {
        let start = *y;
        // at λ_P = 0 the flow direction drops out of the linearization, so a
        // saturated point starts there only as a last resort
        if !(flags.switching && flags.saturation && y[3] <= 0.0) && self.local_newton(e, ae, y, flags) {
            return true;
        }
        if !(flags.switching && flags.saturation) {
            return false;
        }
        // retry from the unsaturated solution pulled back onto the bound
        let prev = self.states[e].pol;
        let psat = self.material.saturation_polarization;
        let mut free = start;
        let unsaturated = ActiveFlags { switching: true, saturation: false };
        let pol = if self.local_newton(e, ae, &mut free, unsaturated) { Vector3::new(free[0], free[1], free[2]) } else { prev };
        if pol.norm() > 0.0 {
            let pol = pol * (psat / pol.norm());
            *y = Vector5::new(pol[0], pol[1], pol[2], (pol - prev).norm(), start[4]);
            if self.local_newton(e, ae, y, flags) {
                return true;
            }
        }
        *y = start;
        self.local_newton(e, ae, y, flags)
    }

    /// Local solves of all elements at nodal values `a`.
    fn relax(&self, a: &[f64], ys: &mut [Vector5<f64>], flags: &[ActiveFlags]) -> bool {
        let mut all = true;
        for e in 0..self.mesh.n_elements() {
            all &= self.relax_element(e, &self.gather(a, e), &mut ys[e], flags[e]);
        }
        all
    }

    /// Newton iteration on the nodal values with frozen active sets; the local
    /// unknowns are solved element by element at every iterate. Returns the
    /// iteration count, the final merit and whether it converged.
    fn newton(&self, a: &mut Vec<f64>, ys: &mut [Vector5<f64>], flags: &[ActiveFlags]) -> Result<(usize, f64, bool)> {
        let numbering = self.free_numbering();
        let relaxed = self.relax(a, ys, flags);
        let mut lin = self.linearize(a, ys, flags, Some(&numbering))?;
        let mut merit = self.merit(&lin).0;
        if !relaxed {
            return Ok((0, merit, false));
        }
        let mut iterations = 0;
        let mut damped = 0;
        let psat = self.material.saturation_polarization;
        while merit > 1.0 && iterations < self.settings.max_newton {
            iterations += 1;
            let (mat, rhs) = lin.matrix.take().expect("matrix requested");
            let da_free = mat.solve(&rhs)?;
            let mut da = vec![0.0; self.n_dofs()];
            for (d, f) in numbering.0.iter().enumerate() {
                if let Some(f) = f {
                    da[d] = da_free[*f];
                }
            }
            let dy: Vec<Vector5<f64>> = (0..self.mesh.n_elements())
                .map(|e| {
                    let c = &lin.condensed[e];
                    -(c.ll_inv * (c.r_l + c.l_a * self.gather(&da, e)))
                })
                .collect();
            // line search on a fixed-weight sum of squares, for which the
            // Newton direction is a descent direction
            let weights = self.residual_weights(&lin);
            let current = self.squared_residual(&lin, &weights);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..12 {
                let ta: Vec<f64> = a.iter().zip(&da).map(|(x, d)| x + alpha * d).collect();
                let mut ty: Vec<Vector5<f64>> = ys.iter().zip(&dy).map(|(y, d)| y + d * alpha).collect();
                if self.relax(&ta, &mut ty, flags) {
                    if let Ok(tl) = self.linearize(&ta, &ty, flags, None) {
                        if self.squared_residual(&tl, &weights) <= (1.0 - 1e-4 * alpha) * current {
                            let m = self.merit(&tl).0;
                            accepted = Some((ta, ty, m));
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            let Some((ta, ty, m)) = accepted else { break };
            damped = if alpha < 1.0 / 64.0 { damped + 1 } else { 0 };
            *a = ta;
            ys.copy_from_slice(&ty);
            merit = m;
            // far outside the saturation bound, or crawling, the sets are
            // most likely wrong
            let overshoot = flags.iter().zip(ys.iter()).any(|(f, y)| f.switching && !f.saturation && y.fixed_rows::<3>(0).norm() > OVERSHOOT * psat);
            if merit > 1.0 && (overshoot || damped >= 3) {
                break;
            }
            lin = self.linearize(a, ys, flags, Some(&numbering))?;
        }
        Ok((iterations, merit, merit <= 1.0))
    }

    fn failure(&self, a: &[f64], ys: &[Vector5<f64>], flags: &[ActiveFlags], reason: &str) -> Error {
        let step = self.steps_done + 1;
        let detail = match self.linearize(a, ys, flags, None) {
            Ok(lin) => {
                let (merit, dof) = self.merit(&lin);
                let e = lin.worst_element;
                format!(
                    "{reason}; merit {merit:.3e}, worst dof {dof} (node {}, component {}), worst element {e} at {:?} with sets {} and local residual {:.3e}",
                    dof / DOFS_PER_NODE,
                    dof % DOFS_PER_NODE,
                    self.mesh.element_center(e),
                    flags[e].label(),
                    lin.local_max
                )
            }
            Err(err) => format!("{reason}; {err}"),
        };
        Error::StepFailed { step, reason: detail }
    }

    fn trial_dofs(&self) -> Vec<f64> {
        let mut a = self.dofs.clone();
        for (d, v) in self.prescribed.iter().enumerate() {
            if let Some(v) = v {
                a[d] = *v;
            }
        }
        a
    }

    /// Equilibrates the nodal unknowns with all polarizations frozen, e.g.
    /// after prescribing an initial polarization. Does not count as a step.
    pub fn solve_reversible(&mut self) -> Result<StepReport> {
        self.settings.validate()?;
        let mut a = self.trial_dofs();
        let mut ys: Vec<Vector5<f64>> = self.states.iter().map(|st| Vector5::new(st.pol[0], st.pol[1], st.pol[2], 0.0, 0.0)).collect();
        let flags = vec![ActiveFlags::INACTIVE; self.mesh.n_elements()];
        let (its, merit, ok) = self.newton(&mut a, &mut ys, &flags).map_err(|e| self.failure(&a, &ys, &flags, &e.to_string()))?;
        if !ok {
            return Err(self.failure(&a, &ys, &flags, "equilibration did not converge"));
        }
        for st in self.states.iter_mut() {
            st.lambda_p = 0.0;
            st.lambda_s = 0.0;
            st.active = ActiveFlags::INACTIVE;
        }
        self.dofs = a;
        Ok(StepReport { step: self.steps_done, active_loops: 1, newton_iterations: its, merit, substeps: 1, ..StepReport::default() })
    }

    /// Solves one load step for the current prescribed values and loads and
    /// commits it. The model is left unchanged on failure.
    pub fn solve_step(&mut self) -> Result<StepReport> {
        self.settings.validate()?;
        let ne = self.mesh.n_elements();
        let mut a = self.trial_dofs();
        let mut ys: Vec<Vector5<f64>> = self.states.iter().map(|st| Vector5::new(st.pol[0], st.pol[1], st.pol[2], 0.0, st.lambda_s)).collect();
        let mut flags = vec![ActiveFlags::INACTIVE; ne];
        let mut guards = vec![RemovalGuard::default(); ne];
        let mut locks = vec![ActiveFlags::INACTIVE; ne];
        let mut last_ok: Option<(Vec<ActiveFlags>, Vec<f64>, Vec<Vector5<f64>>)> = None;
        let mut history = Vec::new();
        let mut rescues = 0;
        let mut report = StepReport { step: self.steps_done + 1, substeps: 1, ..StepReport::default() };
        loop {
            report.active_loops += 1;
            // inactive constraints pin their unknowns; start there
            for e in 0..ne {
                if !flags[e].switching {
                    let pol = self.states[e].pol;
                    ys[e] = Vector5::new(pol[0], pol[1], pol[2], 0.0, ys[e][4]);
                }
                if !flags[e].saturation {
                    ys[e][4] = 0.0;
                }
            }
            let (its, merit, ok) = match self.newton(&mut a, &mut ys, &flags) {
                Ok(v) => v,
                Err(err) => return Err(self.failure(&a, &ys, &flags, &err.to_string())),
            };
            report.newton_iterations += its;
            report.merit = merit;
            let mut changed = 0;
            let mut new_flags = flags.clone();
            let psat = self.material.saturation_polarization;
            for e in 0..ne {
                let y = ys[e];
                let trial = InternalState::from_unknowns(&y, flags[e]);
                let ev = element::evaluate(self.mesh.element_size(e), &self.gather(&a, e), &trial.pol, trial.lambda_s, &self.material);
                let mut guard = guards[e];
                let (mut f, _) = update_active_sets_guarded(&trial, &ev.driving_force, &self.material, &self.settings.local, &mut guard);
                if ok {
                    guards[e] = guard;
                    f.switching |= locks[e].switching;
                    f.saturation |= locks[e].saturation;
                } else {
                    // an unconverged iterate may only add constraints; a point
                    // that starts saturated and switches stays on the bound
                    f.switching |= flags[e].switching;
                    f.saturation |= flags[e].saturation;
                    if f.switching && self.states[e].pol.norm() >= psat - self.settings.local.delta_s {
                        f.saturation = true;
                    }
                    // constraints dropped since the last converged solve come
                    // back and stay for the rest of the step
                    if let Some((last, _, _)) = &last_ok {
                        let back = last[e];
                        locks[e].switching |= back.switching && !flags[e].switching;
                        locks[e].saturation |= back.saturation && !flags[e].saturation;
                        f.switching |= locks[e].switching;
                        f.saturation |= locks[e].saturation;
                    }
                }
                new_flags[e] = f;
                changed += (f != flags[e]) as usize;
            }
            if ok {
                last_ok = Some((flags.clone(), a.clone(), ys.clone()));
            } else if changed > 0 {
                if let Some((_, la, lys)) = &last_ok {
                    a.clone_from(la);
                    ys.clone_from(lys);
                }
            }
            history.push(changed);
            // frozen sets that admit no solution stall the Newton iteration;
            // a few times per step the stalled iterate may also remove constraints
            if changed == 0 && !ok && rescues < MAX_RESCUES {
                rescues += 1;
                locks.fill(ActiveFlags::INACTIVE);
                for e in 0..ne {
                    let trial = InternalState::from_unknowns(&ys[e], flags[e]);
                    let ev = element::evaluate(self.mesh.element_size(e), &self.gather(&a, e), &trial.pol, trial.lambda_s, &self.material);
                    let (f, _) = update_active_sets_guarded(&trial, &ev.driving_force, &self.material, &self.settings.local, &mut guards[e]);
                    new_flags[e] = f;
                    changed += (f != flags[e]) as usize;
                }
                if changed > 0 {
                    if let Some((_, la, lys)) = &last_ok {
                        a.clone_from(la);
                        ys.clone_from(lys);
                    }
                }
            }
            if changed == 0 {
                if !ok {
                    return Err(self.failure(&a, &ys, &flags, "global Newton iteration did not converge"));
                }
                break;
            }
            if report.active_loops >= self.settings.local.max_active_loops {
                let history = history.iter().map(|c| format!("{c} changed")).collect::<Vec<_>>().join(" -> ");
                return Err(Error::StepFailed {
                    step: report.step,
                    reason: Error::ActiveSetCycling { loops: report.active_loops, history }.to_string(),
                });
            }
            flags = new_flags;
        }
        for e in 0..ne {
            let new = InternalState::from_unknowns(&ys[e], flags[e]);
            let ev = element::evaluate(self.mesh.element_size(e), &self.gather(&a, e), &new.pol, new.lambda_s, &self.material);
            report.dissipation += ev.driving_force.dot(&(new.pol - self.states[e].pol)) * ev.volume;
            report.switching_elements += flags[e].switching as usize;
            report.saturated_elements += flags[e].saturation as usize;
            self.states[e] = new;
        }
        self.dofs = a;
        self.steps_done += 1;
        Ok(report)
    }

    /// Internal forces minus loads on every dof; on prescribed dofs these are
    /// the reactions.
    pub fn out_of_balance(&self) -> Vec<f64> {
        let mut residual: Vec<f64> = self.loads.iter().map(|f| -f).collect();
        for e in 0..self.mesh.n_elements() {
            let map = self.element_dofs(e);
            let st = &self.states[e];
            let ev = element::evaluate(self.mesh.element_size(e), &self.gather(&self.dofs, e), &st.pol, st.lambda_s, &self.material);
            for i in 0..ELEMENT_DOFS {
                residual[map[i]] += ev.residual[i];
            }
        }
        residual
    }

    /// Gauss-point averaged fields of every element.
    pub fn recover_fields(&self) -> Vec<ElementFields> {
        (0..self.mesh.n_elements())
            .map(|e| {
                let st = &self.states[e];
                let ev = element::evaluate(self.mesh.element_size(e), &self.gather(&self.dofs, e), &st.pol, st.lambda_s, &self.material);
                ElementFields {
                    stress: ev.stress,
                    strain: ev.strain,
                    field: ev.field,
                    displacement: ev.displacement,
                    pol: st.pol,
                    driving_force: ev.driving_force,
                }
            })
            .collect()
    }

    pub fn displacement(&self, node: usize) -> Vector3<f64> {
        Vector3::new(self.dofs[4 * node], self.dofs[4 * node + 1], self.dofs[4 * node + 2])
    }

    pub fn potential(&self, node: usize) -> f64 {
        self.dofs[4 * node + PHI]
    }
}

/// One brick of size `h` with minimal rigid-body supports, to be driven by
/// homogeneous stress and field.
pub fn homogeneous_element(h: [f64; 3], material: MaterialParams, settings: FeSettings) -> Result<FeModel> {
    let mesh = Mesh::uniform([0.0; 3], h, [1, 1, 1])?;
    let mut model = FeModel::new(mesh, material, settings);
    let origin = model.mesh.node_index(0, 0, 0);
    let along_x = model.mesh.node_index(1, 0, 0);
    let along_y = model.mesh.node_index(0, 1, 0);
    for c in [UX, UY, UZ] {
        model.fix(FeModel::dof(origin, c), 0.0);
    }
    model.fix(FeModel::dof(along_x, UY), 0.0);
    model.fix(FeModel::dof(along_x, UZ), 0.0);
    model.fix(FeModel::dof(along_y, UZ), 0.0);
    Ok(model)
}

/// Sets potentials `φ = −E·x` on all nodes and face tractions `σ n` on all
/// faces of a single-element model.
pub fn apply_homogeneous(model: &mut FeModel, stress: &SymTensor2, field: &Vector3<f64>) {
    model.clear_loads();
    for n in 0..model.mesh.n_nodes() {
        let x = model.mesh.node_coords(n);
        model.fix(FeModel::dof(n, PHI), -(field[0] * x[0] + field[1] * x[1] + field[2] * x[2]));
    }
    let sig = stress.to_stress_matrix();
    for axis in 0..3 {
        for side in 0..2 {
            let sign = if side == 0 { -1.0 } else { 1.0 };
            let t = [sig[(0, axis)] * sign, sig[(1, axis)] * sign, sig[(2, axis)] * sign];
            model.add_face_traction(axis, side, t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_driver::{build_scenario, run_program, Scenario};

    fn cube_model(div: [usize; 3]) -> FeModel {
        let p = MaterialParams::table1();
        let s = FeSettings::for_material(&p);
        let mesh = Mesh::uniform([0.0; 3], [1e-3, 1e-3, 1e-3], div).unwrap();
        FeModel::new(mesh, p, s)
    }

    #[test]
    fn zero_load_step_changes_nothing() {
        let mut m = cube_model([2, 2, 2]);
        for c in [UX, UY, UZ, PHI] {
            m.fix(FeModel::dof(0, c), 0.0);
        }
        m.fix(FeModel::dof(m.mesh.node_index(2, 0, 0), UY), 0.0);
        m.fix(FeModel::dof(m.mesh.node_index(2, 0, 0), UZ), 0.0);
        m.fix(FeModel::dof(m.mesh.node_index(0, 2, 0), UZ), 0.0);
        let r = m.solve_step().unwrap();
        assert!(m.dofs.iter().all(|v| *v == 0.0));
        assert_eq!(r.active_loops, 1);
        assert_eq!(r.switching_elements, 0);
        assert_eq!(r.dissipation, 0.0);
        for f in m.recover_fields() {
            assert_eq!(f.stress, SymTensor2::ZERO);
        }
    }

    #[test]
    fn patch_test_reproduces_uniform_stress() {
        // uniaxial tension through consistent face tractions on a graded mesh
        let p = MaterialParams::table1();
        let s = FeSettings::for_material(&p);
        let xs = mesh::axis_coordinates(0.0, &[mesh::AxisPiece { length: 1e-3, divisions: 3, ratio: 1.7 }]).unwrap();
        let ys = vec![0.0, 0.2e-3, 1e-3];
        let zs = vec![0.0, 0.6e-3, 0.7e-3, 1e-3];
        let mesh = Mesh::from_coordinates(xs, ys, zs).unwrap();
        let mut m = FeModel::new(mesh, p.clone(), s);
        let sxx = 5e6;
        m.add_face_traction(0, 1, [sxx, 0.0, 0.0]);
        m.add_face_traction(0, 0, [-sxx, 0.0, 0.0]);
        let o = m.mesh.node_index(0, 0, 0);
        for c in [UX, UY, UZ] {
            m.fix(FeModel::dof(o, c), 0.0);
        }
        let bx = m.mesh.node_index(3, 0, 0);
        m.fix(FeModel::dof(bx, UY), 0.0);
        m.fix(FeModel::dof(bx, UZ), 0.0);
        m.fix(FeModel::dof(m.mesh.node_index(0, 2, 0), UZ), 0.0);
        for n in 0..m.mesh.n_nodes() {
            m.fix(FeModel::dof(n, PHI), 0.0);
        }
        m.solve_step().unwrap();
        let exx = sxx / p.youngs_modulus;
        for n in 0..m.mesh.n_nodes() {
            let x = m.mesh.node_coords(n);
            let u = m.displacement(n);
            assert!((u[0] - exx * x[0]).abs() < 1e-9 * exx * 1e-3);
            assert!((u[1] + p.poisson_ratio * exx * x[1]).abs() < 1e-9 * exx * 1e-3);
        }
        for f in m.recover_fields() {
            assert!((f.stress.0[0] - sxx).abs() < 1e-7 * sxx);
            for i in 1..6 {
                assert!(f.stress.0[i].abs() < 1e-7 * sxx);
            }
        }
    }

    #[test]
    fn capacitor_has_uniform_field() {
        let mut m = cube_model([2, 2, 3]);
        let v = 100.0;
        let t = 1e-3;
        for n in 0..m.mesh.n_nodes() {
            let z = m.mesh.node_coords(n)[2];
            if z == 0.0 {
                m.fix(FeModel::dof(n, PHI), 0.0);
            } else if (z - t).abs() < 1e-15 {
                m.fix(FeModel::dof(n, PHI), v);
            }
        }
        for c in [UX, UY, UZ] {
            m.fix(FeModel::dof(0, c), 0.0);
        }
        m.fix(FeModel::dof(m.mesh.node_index(2, 0, 0), UY), 0.0);
        m.fix(FeModel::dof(m.mesh.node_index(2, 0, 0), UZ), 0.0);
        m.fix(FeModel::dof(m.mesh.node_index(0, 2, 0), UZ), 0.0);
        m.solve_step().unwrap();
        let eps = m.material.permittivity;
        for f in m.recover_fields() {
            assert!((f.field[2] + v / t).abs() < 1e-9 * v / t);
            assert!((f.displacement[2] + eps * v / t).abs() < 1e-9 * eps * v / t);
            assert!(f.stress.norm_max() < 1e-6);
        }
    }

    #[test]
    fn single_element_follows_point_driver() {
        let p = MaterialParams::table1();
        let prog = build_scenario(Scenario::Hysteresis, &p, 10).unwrap();
        let point = run_program(&prog, &p, &SolverSettings::for_material(&p)).unwrap();
        let mut m = homogeneous_element([1e-3; 3], p.clone(), FeSettings::for_material(&p)).unwrap();
        for (row, (_, ctrl)) in point.iter().zip(prog.step_controls()) {
            apply_homogeneous(&mut m, &ctrl.stress, &ctrl.field);
            let rep = m.solve_step().unwrap();
            let st = m.states[0];
            assert!((st.pol - row.pol).amax() <= 1e-8 * p.saturation_polarization, "step {}", row.step);
            let f = m.recover_fields()[0];
            assert!((f.displacement - row.displacement).amax() <= 1e-8 * p.saturation_polarization);
            assert!((f.strain.0[2] - row.strain.0[2]).abs() <= 1e-8 * p.saturation_strain);
            assert_eq!(rep.active_loops, row.active_loops, "step {}", row.step);
        }
    }
}
