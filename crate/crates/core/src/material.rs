//! Constitutive law of the ferroelectric material point.
//!
//! The reversible response is linear piezoelectricity whose coupling tensor
//! grows with the remanent polarization `P_I`; the remanent strain is a
//! volume-preserving uniaxial strain along `P_I`. The enthalpy density
//! includes the hardening energy `½ c P_I·P_I` and the saturation term
//! `λ_S (|P_I| − P_sat)`. Its negative gradient with respect to `P_I` is the
//! driving force `Ê` that enters the switching condition.
//!
//! Directional quantities are undefined at `P_I = 0`; below
//! [`VIRGIN_THRESHOLD`]` · P_sat` the coupling tensor, the remanent strain,
//! their derivatives and the saturation gradient are taken as zero.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensors::{dyad_strain, isotropic_compliance, Full3, PiezoTensor3, SymTensor2, SymTensor4};

/// Relative magnitude `|P_I| / P_sat` below which the material counts as unpoled.
pub const VIRGIN_THRESHOLD: f64 = 1e-8;

/// Material constants in the units of the published parameter tables
/// (`Y` in MPa, `E_C` in MV/m, everything else SI). This is the on-disk form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialTable {
    #[serde(rename = "Y")]
    pub youngs_modulus_mpa: f64,
    #[serde(rename = "nu")]
    pub poisson_ratio: f64,
    #[serde(rename = "E_C")]
    pub coercive_field_mv_per_m: f64,
    #[serde(rename = "S_sat")]
    pub saturation_strain: f64,
    #[serde(rename = "P_sat")]
    pub saturation_polarization: f64,
    #[serde(rename = "c")]
    pub hardening: f64,
    pub d_p: f64,
    pub d_n: f64,
    pub d_t: f64,
    #[serde(rename = "epsilon")]
    pub permittivity: f64,
}

impl MaterialTable {
    pub fn table1() -> Self {
        MaterialTable {
            youngs_modulus_mpa: 1.0e4,
            poisson_ratio: 0.3,
            coercive_field_mv_per_m: 1.0,
            saturation_strain: 0.002,
            saturation_polarization: 0.3,
            hardening: 2.0e6,
            d_p: 5.93e-10,
            d_n: -2.74e-10,
            d_t: 7.41e-10,
            permittivity: 1.5e-8,
        }
    }

    pub fn table2() -> Self {
        MaterialTable {
            youngs_modulus_mpa: 6.1e4,
            poisson_ratio: 0.31,
            coercive_field_mv_per_m: 0.8,
            saturation_strain: 0.0046,
            saturation_polarization: 0.23,
            hardening: 0.9e6,
            d_p: 5.93e-10,
            d_n: -2.74e-10,
            d_t: 7.41e-10,
            permittivity: 6.2e-8,
        }
    }
}

/// Material constants in SI units together with the derived moduli.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialParams {
    /// Pa
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// V/m
    pub coercive_field: f64,
    pub saturation_strain: f64,
    /// C/m²
    pub saturation_polarization: f64,
    /// V·m/C
    pub hardening: f64,
    /// m/V
    pub d_p: f64,
    pub d_n: f64,
    pub d_t: f64,
    /// C/(V·m), isotropic
    pub permittivity: f64,
    compliance: SymTensor4,
    stiffness: SymTensor4,
}

impl MaterialParams {
    pub fn from_table(t: &MaterialTable) -> Result<Self> {
        let positive = [
            ("Y", t.youngs_modulus_mpa),
            ("E_C", t.coercive_field_mv_per_m),
            ("S_sat", t.saturation_strain),
            ("P_sat", t.saturation_polarization),
            ("c", t.hardening),
            ("d_p", t.d_p),
            ("d_t", t.d_t),
            ("epsilon", t.permittivity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !t.d_n.is_finite() {
            return Err(Error::InvalidParameter(format!("d_n must be finite, got {}", t.d_n)));
        }
        let youngs = t.youngs_modulus_mpa * 1.0e6;
        let compliance = isotropic_compliance(youngs, t.poisson_ratio)?;
        let stiffness = compliance.inverse()?;
        Ok(MaterialParams {
            youngs_modulus: youngs,
            poisson_ratio: t.poisson_ratio,
            coercive_field: t.coercive_field_mv_per_m * 1.0e6,
            saturation_strain: t.saturation_strain,
            saturation_polarization: t.saturation_polarization,
            hardening: t.hardening,
            d_p: t.d_p,
            d_n: t.d_n,
            d_t: t.d_t,
            permittivity: t.permittivity,
            compliance,
            stiffness,
        })
    }

    pub fn to_table(&self) -> MaterialTable {
        MaterialTable {
            youngs_modulus_mpa: self.youngs_modulus * 1.0e-6,
            poisson_ratio: self.poisson_ratio,
            coercive_field_mv_per_m: self.coercive_field * 1.0e-6,
            saturation_strain: self.saturation_strain,
            saturation_polarization: self.saturation_polarization,
            hardening: self.hardening,
            d_p: self.d_p,
            d_n: self.d_n,
            d_t: self.d_t,
            permittivity: self.permittivity,
        }
    }

    /// Parameters of the electric, butterfly, beam and bimorph benchmarks.
    pub fn table1() -> Self {
        Self::from_table(&MaterialTable::table1()).expect("bundled preset is valid")
    }

    /// Parameters of the non-proportional loading benchmark.
    pub fn table2() -> Self {
        Self::from_table(&MaterialTable::table2()).expect("bundled preset is valid")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "table1" => Ok(Self::table1()),
            "table2" => Ok(Self::table2()),
            other => Err(Error::Config(format!("unknown material preset `{other}` (expected table1 or table2)"))),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let table: MaterialTable = serde_json::from_str(s)?;
        Self::from_table(&table)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_table()).expect("table serializes")
    }

    /// `S^E`, stress to engineering strain.
    pub fn compliance(&self) -> &SymTensor4 {
        &self.compliance
    }

    /// `C^E = (S^E)^-1`.
    pub fn stiffness(&self) -> &SymTensor4 {
        &self.stiffness
    }

    pub fn permittivity_tensor(&self) -> Matrix3<f64> {
        Matrix3::identity() * self.permittivity
    }

    fn is_virgin(&self, pol: &Vector3<f64>) -> bool {
        pol.norm() < VIRGIN_THRESHOLD * self.saturation_polarization
    }

    fn anisotropy(&self) -> f64 {
        self.d_p - self.d_n - self.d_t
    }

    /// Direction part of the coupling tensor, `d = |P_I|/P_sat · g(e^P)`, full index `g[k][j][i]`.
    fn direction_tensor(&self, e: &Vector3<f64>) -> Full3 {
        let a = self.anisotropy();
        let mut g = [[[0.0; 3]; 3]; 3];
        for (k, gk) in g.iter_mut().enumerate() {
            for (j, gkj) in gk.iter_mut().enumerate() {
                for (i, v) in gkj.iter_mut().enumerate() {
                    *v = a * e[i] * e[j] * e[k]
                        + self.d_n * delta(i, j) * e[k]
                        + 0.5 * self.d_t * (delta(k, i) * e[j] + delta(k, j) * e[i]);
                }
            }
        }
        g
    }

    /// `∂g/∂e_a` in full index form.
    fn direction_tensor_derivative(&self, e: &Vector3<f64>, a_idx: usize) -> Full3 {
        let a = self.anisotropy();
        let mut g = [[[0.0; 3]; 3]; 3];
        for (k, gk) in g.iter_mut().enumerate() {
            for (j, gkj) in gk.iter_mut().enumerate() {
                for (i, v) in gkj.iter_mut().enumerate() {
                    *v = a * (delta(i, a_idx) * e[j] * e[k] + e[i] * delta(j, a_idx) * e[k] + e[i] * e[j] * delta(k, a_idx))
                        + self.d_n * delta(i, j) * delta(k, a_idx)
                        + 0.5 * self.d_t * (delta(k, i) * delta(j, a_idx) + delta(k, j) * delta(i, a_idx));
                }
            }
        }
        g
    }

    /// Polarization-dependent piezoelectric tensor `d(P_I)`.
    pub fn piezo_tensor(&self, pol: &Vector3<f64>) -> PiezoTensor3 {
        if self.is_virgin(pol) {
            return PiezoTensor3::zeros();
        }
        let r = pol.norm();
        let e = pol / r;
        PiezoTensor3::from_full(&self.direction_tensor(&e)).scale(r / self.saturation_polarization)
    }

    /// `∂d/∂P_m` for `m = 0..3`, each in reduced form.
    pub fn piezo_tensor_derivative(&self, pol: &Vector3<f64>) -> [PiezoTensor3; 3] {
        if self.is_virgin(pol) {
            return [PiezoTensor3::zeros(); 3];
        }
        let r = pol.norm();
        let e = pol / r;
        let g = PiezoTensor3::from_full(&self.direction_tensor(&e)).0;
        let dg: Vec<_> = (0..3)
            .map(|a| PiezoTensor3::from_full(&self.direction_tensor_derivative(&e, a)).0)
            .collect();
        let radial = dg[0] * e[0] + dg[1] * e[1] + dg[2] * e[2];
        let inv_sat = 1.0 / self.saturation_polarization;
        std::array::from_fn(|m| PiezoTensor3((g * e[m] + dg[m] - radial * e[m]) * inv_sat))
    }

    /// Volume-preserving remanent strain `ε_I(P_I)` (engineering shears).
    pub fn remanent_strain(&self, pol: &Vector3<f64>) -> SymTensor2 {
        if self.is_virgin(pol) {
            return SymTensor2::ZERO;
        }
        let k = 1.5 * self.saturation_strain / self.saturation_polarization.powi(2);
        let p2 = pol.norm_squared();
        let mut eps = dyad_strain(pol);
        for c in eps.0.iter_mut().take(3) {
            *c -= p2 / 3.0;
        }
        eps.scale(k)
    }

    /// `∂ε_I/∂P_m` for `m = 0..3` (engineering shears).
    pub fn remanent_strain_derivative(&self, pol: &Vector3<f64>) -> [SymTensor2; 3] {
        if self.is_virgin(pol) {
            return [SymTensor2::ZERO; 3];
        }
        let k = 1.5 * self.saturation_strain / self.saturation_polarization.powi(2);
        std::array::from_fn(|m| {
            let mut unit = Vector3::zeros();
            unit[m] = 1.0;
            let sym = unit * pol.transpose() + pol * unit.transpose();
            let mut t = SymTensor2::strain_from_matrix(&sym);
            for c in t.0.iter_mut().take(3) {
                *c -= 2.0 / 3.0 * pol[m];
            }
            t.scale(k)
        })
    }

    /// Switching function `f_P = |Ê| − E_C`.
    pub fn switching_fn(&self, ehat: &Vector3<f64>) -> f64 {
        ehat.norm() - self.coercive_field
    }

    /// Saturation function `f_S = |P_I| − P_sat`.
    pub fn saturation_fn(&self, pol: &Vector3<f64>) -> f64 {
        pol.norm() - self.saturation_polarization
    }

    /// `∂f_S/∂P_I`, zero for an unpoled state.
    pub fn saturation_gradient(&self, pol: &Vector3<f64>) -> Vector3<f64> {
        if self.is_virgin(pol) {
            Vector3::zeros()
        } else {
            pol / pol.norm()
        }
    }

    /// Enthalpy density `h^S(σ, E, P_I, λ_S)`.
    pub fn enthalpy_density(&self, sigma: &SymTensor2, field: &Vector3<f64>, pol: &Vector3<f64>, lambda_s: f64) -> f64 {
        let d = self.piezo_tensor(pol);
        let dielectric = -0.5 * self.permittivity * field.norm_squared();
        let elastic = -0.5 * sigma.dot(&self.compliance.apply4(sigma));
        let coupling = -sigma.dot(&d.apply3_transpose(field));
        let hardening = 0.5 * self.hardening * pol.norm_squared();
        let polar = -pol.dot(field);
        let remanent = -self.remanent_strain(pol).dot(sigma);
        let saturation = lambda_s * self.saturation_fn(pol);
        dielectric + elastic + coupling + hardening + polar + remanent + saturation
    }

    /// Driving force `Ê = −∂h^S/∂P_I`.
    ///
    /// The coupling energy is homogeneous of degree one in `P_I`, so at an
    /// unpoled point its gradient depends on the direction of approach. There
    /// the limit along the direction `Ê` itself points to is returned.
    pub fn driving_force(&self, sigma: &SymTensor2, field: &Vector3<f64>, pol: &Vector3<f64>, lambda_s: f64) -> Vector3<f64> {
        if self.is_virgin(pol) {
            return self.virgin_driving_force(sigma, field);
        }
        let dd = self.piezo_tensor_derivative(pol);
        let de = self.remanent_strain_derivative(pol);
        let mut ehat = field - pol * self.hardening - self.saturation_gradient(pol) * lambda_s;
        for m in 0..3 {
            ehat[m] += field.dot(&dd[m].apply3(sigma)) + sigma.dot(&de[m]);
        }
        ehat
    }

    fn virgin_driving_force(&self, sigma: &SymTensor2, field: &Vector3<f64>) -> Vector3<f64> {
        let limit = |n: &Vector3<f64>| {
            let dd = self.piezo_tensor_derivative(n);
            field + Vector3::from_fn(|m, _| field.dot(&dd[m].apply3(sigma)))
        };
        let mut ehat = *field;
        for _ in 0..50 {
            let norm = ehat.norm();
            if norm == 0.0 {
                break;
            }
            let next = limit(&(ehat / norm));
            let settled = (next - ehat).norm() <= 1e-15 * next.norm();
            ehat = next;
            if settled {
                break;
            }
        }
        ehat
    }

    /// `∂Ê/∂P_I` at fixed `σ`, `E` and `λ_S`.
    pub fn driving_force_jacobian(&self, sigma: &SymTensor2, field: &Vector3<f64>, pol: &Vector3<f64>, lambda_s: f64) -> Matrix3<f64> {
        let psat = self.saturation_polarization;
        let mut jac = -Matrix3::identity() * self.hardening;
        if self.is_virgin(pol) {
            return jac;
        }
        let s = sigma.to_stress_matrix();
        let dev = s - Matrix3::identity() * (s.trace() / 3.0);
        jac += dev * (3.0 * self.saturation_strain / (psat * psat));
        // Only the anisotropic part of σ:d(P)·E is not polynomial in P:
        // (d_p − d_n − d_t)/P_sat · (P·σP)(E·P)/|P|².
        let r2 = pol.norm_squared();
        let inv = 1.0 / r2;
        let q = pol.dot(&(s * pol));
        let l = field.dot(pol);
        let grad_q = s * pol * 2.0;
        let grad_s = pol * (-2.0 * inv * inv);
        let hess_s = Matrix3::identity() * (-2.0 * inv * inv) + pol * pol.transpose() * (8.0 * inv * inv * inv);
        let u = grad_q * l + field * q;
        let hess_f1 = (s * (2.0 * l) + grad_q * field.transpose() + field * grad_q.transpose()) * inv
            + u * grad_s.transpose()
            + grad_s * u.transpose()
            + hess_s * (q * l);
        jac += hess_f1 * (self.anisotropy() / psat);
        let r = r2.sqrt();
        let e = pol / r;
        jac -= (Matrix3::identity() - e * e.transpose()) * (lambda_s / r);
        jac
    }

    /// Reversible constitutive response: strain `ε` (including `ε_I`) and
    /// dielectric displacement `D` (including `P_I`).
    pub fn reversible_response(&self, sigma: &SymTensor2, field: &Vector3<f64>, pol: &Vector3<f64>) -> (SymTensor2, Vector3<f64>) {
        let d = self.piezo_tensor(pol);
        let strain = self
            .compliance
            .apply4(sigma)
            .add(&d.apply3_transpose(field))
            .add(&self.remanent_strain(pol));
        let displacement = d.apply3(sigma) + field * self.permittivity + pol;
        (strain, displacement)
    }
}

#[inline]
fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::rotate_full3;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn p1() -> MaterialParams {
        MaterialParams::table1()
    }

    /// Brute-force evaluation of the coupling tensor straight from its index formula.
    fn brute_piezo(p: &MaterialParams, pol: &Vector3<f64>) -> Full3 {
        let r = pol.norm();
        let e = pol / r;
        let mut d = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            for j in 0..3 {
                for i in 0..3 {
                    let dij = if i == j { 1.0 } else { 0.0 };
                    let dki = if k == i { 1.0 } else { 0.0 };
                    let dkj = if k == j { 1.0 } else { 0.0 };
                    d[k][j][i] = r / p.saturation_polarization
                        * (p.d_p * e[i] * e[j] * e[k]
                            + p.d_n * (dij - e[i] * e[j]) * e[k]
                            + p.d_t * 0.5 * ((dki - e[k] * e[i]) * e[j] + (dkj - e[k] * e[j]) * e[i]));
                }
            }
        }
        d
    }

    fn random_state(raw: &[f64; 13], p: &MaterialParams) -> (SymTensor2, Vector3<f64>, Vector3<f64>, f64) {
        let sigma = SymTensor2(std::array::from_fn(|i| raw[i] * 50.0e6));
        let field = Vector3::new(raw[6], raw[7], raw[8]) * 2.0e6;
        let dir = Vector3::new(raw[9], raw[10], raw[11]);
        let dir = if dir.norm() < 1e-3 { Vector3::z() } else { dir.normalize() };
        let mag = (0.05 + 0.95 * raw[12].abs()) * p.saturation_polarization;
        let lambda_s = raw[12].abs() * 0.5e6;
        (sigma, field, dir * mag, lambda_s)
    }

    #[test]
    fn bundled_presets_convert_units() {
        let p = p1();
        assert_eq!(p.youngs_modulus, 1.0e10);
        assert_eq!(p.coercive_field, 1.0e6);
        let q = MaterialParams::table2();
        assert!((q.youngs_modulus - 6.1e10).abs() < 1.0);
        assert!((q.coercive_field - 0.8e6).abs() < 1e-6);
        assert!(MaterialParams::preset("table3").is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let p = MaterialParams::table2();
        let back = MaterialParams::from_json_str(&p.to_json_string()).unwrap();
        assert!((back.youngs_modulus - p.youngs_modulus).abs() < 1e-3);
        let mut bad = MaterialTable::table1();
        bad.saturation_polarization = 0.0;
        assert!(MaterialParams::from_table(&bad).is_err());
        bad = MaterialTable::table1();
        bad.poisson_ratio = 0.7;
        assert!(MaterialParams::from_table(&bad).is_err());
    }

    #[test]
    fn unpoled_material_has_no_coupling() {
        let p = p1();
        assert_eq!(p.piezo_tensor(&Vector3::zeros()), PiezoTensor3::zeros());
        for t in p.piezo_tensor_derivative(&Vector3::zeros()) {
            assert_eq!(t, PiezoTensor3::zeros());
        }
        assert_eq!(p.remanent_strain(&Vector3::zeros()), SymTensor2::ZERO);
        for t in p.remanent_strain_derivative(&Vector3::zeros()) {
            assert_eq!(t, SymTensor2::ZERO);
        }
    }

    #[test]
    fn fully_poled_entries() {
        let p = p1();
        let d = p.piezo_tensor(&Vector3::new(0.0, 0.0, p.saturation_polarization));
        let m = d.0;
        let tol = 1e-24;
        assert!((m[(2, 2)] - p.d_p).abs() < tol);
        assert!((m[(2, 0)] - p.d_n).abs() < tol);
        assert!((m[(2, 1)] - p.d_n).abs() < tol);
        assert!((m[(0, 4)] - p.d_t).abs() < tol);
        assert!((m[(1, 3)] - p.d_t).abs() < tol);
        let nonzero = m.iter().filter(|v| v.abs() > tol).count();
        assert_eq!(nonzero, 5);
    }

    #[test]
    fn half_poled_along_e1_is_rotated_half_tensor() {
        let p = p1();
        let ps = p.saturation_polarization;
        let d = p.piezo_tensor(&Vector3::new(0.5 * ps, 0.0, 0.0)).to_full();
        let brute = brute_piezo(&p, &Vector3::new(0.5 * ps, 0.0, 0.0));
        // rotation taking e3 onto e1
        let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
        let poled = p.piezo_tensor(&Vector3::new(0.0, 0.0, ps)).to_full();
        let rotated = rotate_full3(&poled, rot.matrix());
        for k in 0..3 {
            for j in 0..3 {
                for i in 0..3 {
                    assert!((d[k][j][i] - brute[k][j][i]).abs() < 1e-22);
                    assert!((d[k][j][i] - 0.5 * rotated[k][j][i]).abs() < 1e-22);
                }
            }
        }
    }

    #[test]
    fn radial_derivative_scales_magnitude() {
        let p = p1();
        let pol = Vector3::new(0.0, 0.0, 0.2);
        let dd = p.piezo_tensor_derivative(&pol);
        let d = p.piezo_tensor(&pol);
        // contraction with ΔP ∥ e3 is d/|P| per unit ΔP
        assert!((dd[2].0 - d.0 / 0.2).abs().max() < 1e-22);
    }

    #[test]
    fn remanent_strain_at_saturation() {
        let p = p1();
        let eps = p.remanent_strain(&Vector3::new(0.0, 0.0, p.saturation_polarization));
        let s = p.saturation_strain;
        let expected = [-0.5 * s, -0.5 * s, s, 0.0, 0.0, 0.0];
        for (a, b) in eps.0.iter().zip(expected) {
            assert!((a - b).abs() < 1e-18);
        }
    }

    #[test]
    fn remanent_strain_derivative_uniaxial() {
        let p = p1();
        let ps = p.saturation_polarization;
        let de = p.remanent_strain_derivative(&Vector3::new(0.0, 0.0, ps));
        let sigma = SymTensor2::uniaxial_33(-10.0e6);
        let contracted = Vector3::new(sigma.dot(&de[0]), sigma.dot(&de[1]), sigma.dot(&de[2]));
        let expected = 2.0 * p.saturation_strain * sigma.0[2] / ps;
        assert!((contracted[2] - expected).abs() < 1e-9 * expected.abs());
        assert!(contracted[0].abs() < 1e-9 && contracted[1].abs() < 1e-9);
    }

    #[test]
    fn switching_and_saturation_functions() {
        let p = p1();
        let ec = p.coercive_field;
        let ps = p.saturation_polarization;
        assert_eq!(p.switching_fn(&Vector3::zeros()), -ec);
        assert_eq!(p.switching_fn(&Vector3::new(0.0, ec, 0.0)), 0.0);
        assert_eq!(p.switching_fn(&Vector3::new(2.0 * ec, 0.0, 0.0)), ec);
        assert_eq!(p.saturation_fn(&Vector3::zeros()), -ps);
        assert_eq!(p.saturation_fn(&Vector3::new(0.0, 0.0, ps)), 0.0);
        assert!((p.saturation_fn(&Vector3::new(2.0 * ps, 0.0, 0.0)) - ps).abs() < 1e-15);
    }

    #[test]
    fn enthalpy_special_values() {
        let p = p1();
        let z = Vector3::zeros();
        assert_eq!(p.enthalpy_density(&SymTensor2::ZERO, &z, &z, 0.0), 0.0);
        let e = Vector3::new(0.0, 0.0, 1.5e6);
        let h = p.enthalpy_density(&SymTensor2::ZERO, &e, &z, 0.0);
        assert!((h + 0.5 * p.permittivity * 1.5e6 * 1.5e6).abs() < 1e-9);
    }

    #[test]
    fn enthalpy_matches_termwise_evaluation() {
        let p = p1();
        let sigma = SymTensor2([3.0e6, -1.0e6, 2.0e6, 0.5e6, -0.7e6, 1.2e6]);
        let e = Vector3::new(0.3e6, -0.2e6, 0.9e6);
        let pol = Vector3::new(0.05, 0.1, -0.2);
        let ls = 1.0e5;
        // full-index evaluation
        let sm = sigma.to_stress_matrix();
        let sfull = p.compliance().compliance_to_full();
        let dfull = brute_piezo(&p, &pol);
        let mut elastic = 0.0;
        let mut coupling = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    coupling += sm[(j, i)] * dfull[k][j][i] * e[k];
                    for l in 0..3 {
                        elastic += sm[(i, j)] * sfull[i][j][k][l] * sm[(k, l)];
                    }
                }
            }
        }
        let k = 1.5 * p.saturation_strain / p.saturation_polarization.powi(2);
        let eps_i = (pol * pol.transpose() - Matrix3::identity() * pol.norm_squared() / 3.0) * k;
        let expected = -0.5 * p.permittivity * e.norm_squared() - 0.5 * elastic - coupling
            + 0.5 * p.hardening * pol.norm_squared()
            - pol.dot(&e)
            - eps_i.component_mul(&sm).sum()
            + ls * (pol.norm() - p.saturation_polarization);
        let h = p.enthalpy_density(&sigma, &e, &pol, ls);
        assert!((h - expected).abs() < 1e-10 * expected.abs());
    }

    #[test]
    fn electric_driving_force_reduces_to_simple_form() {
        let p = p1();
        let e = Vector3::new(0.1e6, 0.0, 1.3e6);
        let pol = Vector3::new(0.0, 0.02, 0.1);
        let ehat = p.driving_force(&SymTensor2::ZERO, &e, &pol, 0.0);
        assert!((ehat - (e - pol * p.hardening)).norm() < 1e-6);
        assert_eq!(p.driving_force(&SymTensor2::ZERO, &Vector3::zeros(), &Vector3::zeros(), 0.0), Vector3::zeros());
    }

    #[test]
    fn reversible_response_special_values() {
        let p = p1();
        let z = Vector3::zeros();
        let (eps, d) = p.reversible_response(&SymTensor2::ZERO, &z, &z);
        assert_eq!(eps, SymTensor2::ZERO);
        assert_eq!(d, z);
        let e = Vector3::new(0.0, 0.0, 0.7e6);
        let (eps, d) = p.reversible_response(&SymTensor2::ZERO, &e, &z);
        assert_eq!(eps, SymTensor2::ZERO);
        assert!((d[2] - p.permittivity * 0.7e6).abs() < 1e-15);
        let ps = p.saturation_polarization;
        let (eps, d) = p.reversible_response(&SymTensor2::ZERO, &e, &Vector3::new(0.0, 0.0, ps));
        assert!((eps.0[2] - (p.d_p * 0.7e6 + p.saturation_strain)).abs() < 1e-15);
        assert!((d[2] - (p.permittivity * 0.7e6 + ps)).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn driving_force_is_negative_enthalpy_gradient(raw in prop::array::uniform13(-1.0f64..1.0)) {
            let p = p1();
            let (sigma, field, pol, ls) = random_state(&raw, &p);
            let ehat = p.driving_force(&sigma, &field, &pol, ls);
            let h = 1e-6 * p.saturation_polarization;
            let mut fd = Vector3::zeros();
            for m in 0..3 {
                let mut a = pol;
                let mut b = pol;
                a[m] += h;
                b[m] -= h;
                fd[m] = -(p.enthalpy_density(&sigma, &field, &a, ls) - p.enthalpy_density(&sigma, &field, &b, ls)) / (2.0 * h);
            }
            let scale = ehat.norm().max(p.coercive_field * 1e-3);
            prop_assert!((ehat - fd).norm() <= 1e-6 * scale, "analytic {ehat:?} fd {fd:?}");
        }

        #[test]
        fn driving_force_jacobian_matches_differences(raw in prop::array::uniform13(-1.0f64..1.0)) {
            let p = p1();
            let (sigma, field, pol, ls) = random_state(&raw, &p);
            let jac = p.driving_force_jacobian(&sigma, &field, &pol, ls);
            let h = 1e-6 * p.saturation_polarization;
            let mut fd = Matrix3::zeros();
            for m in 0..3 {
                let mut a = pol;
                let mut b = pol;
                a[m] += h;
                b[m] -= h;
                let col = (p.driving_force(&sigma, &field, &a, ls) - p.driving_force(&sigma, &field, &b, ls)) / (2.0 * h);
                fd.set_column(m, &col);
            }
            let scale = jac.abs().max().max(p.hardening);
            prop_assert!((jac - fd).abs().max() <= 1e-5 * scale);
        }

        #[test]
        fn piezo_derivative_matches_differences(raw in prop::array::uniform13(-1.0f64..1.0)) {
            let p = p1();
            let (_, _, pol, _) = random_state(&raw, &p);
            let dd = p.piezo_tensor_derivative(&pol);
            let h = 1e-8 * p.saturation_polarization;
            for m in 0..3 {
                let mut a = pol;
                let mut b = pol;
                a[m] += h;
                b[m] -= h;
                let fd = (p.piezo_tensor(&a).0 - p.piezo_tensor(&b).0) / (2.0 * h);
                let scale = dd[m].0.abs().max().max(p.d_p / p.saturation_polarization);
                prop_assert!((fd - dd[m].0).abs().max() <= 1e-6 * scale);
            }
        }

        #[test]
        fn remanent_strain_derivative_matches_differences(raw in prop::array::uniform13(-1.0f64..1.0)) {
            let p = p1();
            let (_, _, pol, _) = random_state(&raw, &p);
            let de = p.remanent_strain_derivative(&pol);
            let h = 1e-8 * p.saturation_polarization;
            for m in 0..3 {
                let mut a = pol;
                let mut b = pol;
                a[m] += h;
                b[m] -= h;
                let fd = p.remanent_strain(&a).sub(&p.remanent_strain(&b)).scale(0.5 / h);
                let scale = p.saturation_strain / p.saturation_polarization;
                prop_assert!(fd.sub(&de[m]).norm_max() <= 1e-6 * scale);
            }
        }

        #[test]
        fn remanent_strain_is_deviatoric_and_uniaxial(raw in prop::array::uniform3(-1.0f64..1.0)) {
            let p = p1();
            let pol = Vector3::from(raw) * p.saturation_polarization;
            let eps = p.remanent_strain(&pol);
            prop_assert!(eps.trace().abs() <= 4.0 * f64::EPSILON * p.saturation_strain);
            if pol.norm() > 1e-3 {
                let m = eps.to_strain_matrix();
                let e = pol.normalize();
                let k = 1.5 * p.saturation_strain / p.saturation_polarization.powi(2);
                let expected = e * (k * pol.norm_squared() * 2.0 / 3.0);
                prop_assert!((m * e - expected).norm() <= 1e-12);
            }
        }

        #[test]
        fn rotation_equivariance(raw in prop::array::uniform3(-1.0f64..1.0), axis in prop::array::uniform3(-1.0f64..1.0), angle in 0.0f64..6.28) {
            let p = p1();
            let pol = Vector3::from(raw) * p.saturation_polarization;
            prop_assume!(pol.norm() > 1e-3 && Vector3::from(axis).norm() > 1e-3);
            let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), angle);
            let r = *rot.matrix();
            let rp = r * pol;
            let lhs = p.remanent_strain(&rp).to_strain_matrix();
            let rhs = r * p.remanent_strain(&pol).to_strain_matrix() * r.transpose();
            prop_assert!((lhs - rhs).abs().max() <= 1e-15);
            let d_rot = p.piezo_tensor(&rp).to_full();
            let expected = rotate_full3(&p.piezo_tensor(&pol).to_full(), &r);
            for k in 0..3 { for j in 0..3 { for i in 0..3 {
                prop_assert!((d_rot[k][j][i] - expected[k][j][i]).abs() <= 1e-12 * p.d_t);
            }}}
        }

        #[test]
        fn piezo_tensor_is_homogeneous(raw in prop::array::uniform3(-1.0f64..1.0), alpha in 0.001f64..1.0) {
            let p = p1();
            let pol = Vector3::from(raw) * p.saturation_polarization;
            prop_assume!(pol.norm() > 1e-3);
            let scaled = p.piezo_tensor(&(pol * alpha)).0;
            let expected = p.piezo_tensor(&pol).0 * alpha;
            prop_assert!((scaled - expected).abs().max() <= 1e-12 * p.d_t);
        }

        #[test]
        fn brute_force_coupling_matches(raw in prop::array::uniform3(-1.0f64..1.0)) {
            let p = p1();
            let pol = Vector3::from(raw) * p.saturation_polarization;
            prop_assume!(pol.norm() > 1e-3);
            let d = p.piezo_tensor(&pol).to_full();
            let brute = brute_piezo(&p, &pol);
            for k in 0..3 { for j in 0..3 { for i in 0..3 {
                prop_assert!((d[k][j][i] - brute[k][j][i]).abs() <= 1e-12 * p.d_t);
            }}}
        }
    }
}
