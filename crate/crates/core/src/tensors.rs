//! Small dense tensor algebra in reduced (Voigt-like) notation.
//!
//! Symmetric second-order tensors are stored as six components ordered
//! `(11, 22, 33, 23, 13, 12)`. Strain-like tensors carry engineering shears
//! (`2 ε_23`, ...), stress-like tensors carry true shears, so the plain
//! six-component dot product of a stress and a strain is the physical double
//! contraction `σ_ij ε_ij`.
//!
//! Full-index representations (`[[f64; 3]; 3]`, `[[[f64; 3]; 3]; 3]`, ...) are
//! provided for cross-checking; the reduced form is what the solver uses.

use nalgebra::{Matrix3, Matrix6, SMatrix, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index pairs of the reduced notation.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Maps a full index pair onto its reduced index.
pub const fn voigt_index(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) | (2, 1) => 3,
        (0, 2) | (2, 0) => 4,
        _ => 5,
    }
}

/// Full-index third-order array `a[k][j][i]`.
pub type Full3 = [[[f64; 3]; 3]; 3];
/// Full-index fourth-order array `a[i][j][k][l]`.
pub type Full4 = [[[[f64; 3]; 3]; 3]; 3];

/// Symmetric 3×3 tensor in reduced notation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymTensor2(pub [f64; 6]);

impl SymTensor2 {
    pub const ZERO: SymTensor2 = SymTensor2([0.0; 6]);

    pub fn new(c: [f64; 6]) -> Self {
        SymTensor2(c)
    }

    /// Uniaxial tensor with a single `33` component.
    pub fn uniaxial_33(value: f64) -> Self {
        SymTensor2([0.0, 0.0, value, 0.0, 0.0, 0.0])
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::from_column_slice(&self.0)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        let mut c = [0.0; 6];
        c.copy_from_slice(v.as_slice());
        SymTensor2(c)
    }

    /// Builds a stress-like tensor (true shears) from a full matrix.
    /// Only the upper triangle is read.
    pub fn stress_from_matrix(m: &Matrix3<f64>) -> Self {
        SymTensor2([m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(1, 2)], m[(0, 2)], m[(0, 1)]])
    }

    /// Builds a strain-like tensor (engineering shears) from a full matrix.
    pub fn strain_from_matrix(m: &Matrix3<f64>) -> Self {
        SymTensor2([
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            2.0 * m[(1, 2)],
            2.0 * m[(0, 2)],
            2.0 * m[(0, 1)],
        ])
    }

    pub fn to_stress_matrix(&self) -> Matrix3<f64> {
        let c = &self.0;
        Matrix3::new(c[0], c[5], c[4], c[5], c[1], c[3], c[4], c[3], c[2])
    }

    pub fn to_strain_matrix(&self) -> Matrix3<f64> {
        let c = &self.0;
        Matrix3::new(
            c[0],
            0.5 * c[5],
            0.5 * c[4],
            0.5 * c[5],
            c[1],
            0.5 * c[3],
            0.5 * c[4],
            0.5 * c[3],
            c[2],
        )
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    /// Plain component-wise dot product. Equals `σ_ij ε_ij` when one operand is
    /// stress-like and the other strain-like.
    pub fn dot(&self, other: &SymTensor2) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        SymTensor2(self.0.map(|c| c * s))
    }

    pub fn add(&self, other: &SymTensor2) -> Self {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0.iter()) {
            *a += b;
        }
        SymTensor2(c)
    }

    pub fn sub(&self, other: &SymTensor2) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn norm_max(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

/// Piezoelectric coupling tensor `d_kji` stored as a 3×6 array.
///
/// Row `k` is the electric index; columns follow the reduced ordering with
/// shear columns holding `2 d_kji`, so `apply3` contracts a true-shear stress
/// and `apply3_transpose` produces an engineering-shear strain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiezoTensor3(pub SMatrix<f64, 3, 6>);

impl Default for PiezoTensor3 {
    fn default() -> Self {
        PiezoTensor3(SMatrix::zeros())
    }
}

impl PiezoTensor3 {
    pub fn zeros() -> Self {
        Self::default()
    }

    /// `d_kji σ_ji`.
    pub fn apply3(&self, sigma: &SymTensor2) -> Vector3<f64> {
        self.0 * sigma.as_vector()
    }

    /// `d_kji E_k` as a strain-like tensor.
    pub fn apply3_transpose(&self, e: &Vector3<f64>) -> SymTensor2 {
        SymTensor2::from_vector(&(self.0.transpose() * e))
    }

    pub fn from_full(d: &Full3) -> Self {
        let mut m = SMatrix::<f64, 3, 6>::zeros();
        for (k, dk) in d.iter().enumerate() {
            for (a, &(j, i)) in VOIGT_PAIRS.iter().enumerate() {
                m[(k, a)] = if a < 3 { dk[j][i] } else { dk[j][i] + dk[i][j] };
            }
        }
        PiezoTensor3(m)
    }

    pub fn to_full(&self) -> Full3 {
        let mut d = [[[0.0; 3]; 3]; 3];
        for (k, dk) in d.iter_mut().enumerate() {
            for (j, dkj) in dk.iter_mut().enumerate() {
                for (i, v) in dkj.iter_mut().enumerate() {
                    let a = voigt_index(j, i);
                    *v = if a < 3 { self.0[(k, a)] } else { 0.5 * self.0[(k, a)] };
                }
            }
        }
        d
    }

    pub fn scale(&self, s: f64) -> Self {
        PiezoTensor3(self.0 * s)
    }
}

/// Fourth-order tensor with major symmetry as a 6×6 reduced array.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymTensor4(pub Matrix6<f64>);

impl SymTensor4 {
    pub fn apply4(&self, t: &SymTensor2) -> SymTensor2 {
        SymTensor2::from_vector(&(self.0 * t.as_vector()))
    }

    pub fn inverse(&self) -> Result<SymTensor4> {
        self.0
            .try_inverse()
            .map(SymTensor4)
            .ok_or_else(|| Error::InvalidParameter("singular fourth-order tensor".into()))
    }

    pub fn is_major_symmetric(&self, tol: f64) -> bool {
        (self.0 - self.0.transpose()).abs().max() <= tol * self.0.abs().max()
    }

    /// Full-index form of a compliance (stress to engineering strain) array,
    /// such that `ε_ij = S_ijkl σ_kl`.
    pub fn compliance_to_full(&self) -> Full4 {
        let mut s = [[[[0.0; 3]; 3]; 3]; 3];
        for (i, si) in s.iter_mut().enumerate() {
            for (j, sij) in si.iter_mut().enumerate() {
                for (k, sijk) in sij.iter_mut().enumerate() {
                    for (l, v) in sijk.iter_mut().enumerate() {
                        let a = voigt_index(i, j);
                        let b = voigt_index(k, l);
                        let fa = if a < 3 { 1.0 } else { 0.5 };
                        let fb = if b < 3 { 1.0 } else { 0.5 };
                        *v = self.0[(a, b)] * fa * fb;
                    }
                }
            }
        }
        s
    }
}

/// Isotropic compliance for Young's modulus `youngs` and Poisson ratio `nu`,
/// mapping true-shear stress onto engineering-shear strain.
pub fn isotropic_compliance(youngs: f64, nu: f64) -> Result<SymTensor4> {
    if !(youngs > 0.0 && youngs.is_finite()) {
        return Err(Error::InvalidParameter(format!("Young's modulus must be positive, got {youngs}")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::InvalidParameter(format!("Poisson ratio must lie in (-1, 0.5), got {nu}")));
    }
    let mut s = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            s[(i, j)] = if i == j { 1.0 / youngs } else { -nu / youngs };
        }
        s[(i + 3, i + 3)] = 2.0 * (1.0 + nu) / youngs;
    }
    Ok(SymTensor4(s))
}

/// Dyadic product `a ⊗ a` as a stress-like (true shear) tensor.
pub fn dyad_stress(a: &Vector3<f64>) -> SymTensor2 {
    SymTensor2::stress_from_matrix(&(a * a.transpose()))
}

/// Dyadic product `a ⊗ a` as a strain-like (engineering shear) tensor.
pub fn dyad_strain(a: &Vector3<f64>) -> SymTensor2 {
    SymTensor2::strain_from_matrix(&(a * a.transpose()))
}

/// Rotates a full third-order array: `d'_kji = R_ka R_jb R_ic d_abc`.
pub fn rotate_full3(d: &Full3, r: &Matrix3<f64>) -> Full3 {
    let mut out = [[[0.0; 3]; 3]; 3];
    for (k, ok) in out.iter_mut().enumerate() {
        for (j, okj) in ok.iter_mut().enumerate() {
            for (i, v) in okj.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (a, da) in d.iter().enumerate() {
                    for (b, dab) in da.iter().enumerate() {
                        for (c, dabc) in dab.iter().enumerate() {
                            acc += r[(k, a)] * r[(j, b)] * r[(i, c)] * dabc;
                        }
                    }
                }
                *v = acc;
            }
        }
    }
    out
}
