//! Trilinear brick with displacement and potential at the nodes and
//! element-constant remanent polarization.
//!
//! Element unknowns are ordered node by node as `(u_x, u_y, u_z, φ)`. At each
//! of the 2×2×2 Gauss points the reversible response is evaluated in mixed
//! form:
//!
//! * `σ = C (ε − ε_I(P) − d(P)ᵀ E)`,
//! * `D = d(P) σ + ε_perm E + P`, with `E = −∇φ`.
//!
//! The driving force of the element is the volume average of the Gauss-point
//! values of `Ê`.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector6};

use crate::material::MaterialParams;
use crate::tensors::SymTensor2;

pub const NODES: usize = 8;
pub const DOFS_PER_NODE: usize = 4;
pub const ELEMENT_DOFS: usize = NODES * DOFS_PER_NODE;

pub type ElemVector = SVector<f64, ELEMENT_DOFS>;
pub type ElemMatrix = SMatrix<f64, ELEMENT_DOFS, ELEMENT_DOFS>;
pub type StrainOperator = SMatrix<f64, 6, ELEMENT_DOFS>;
pub type GradientOperator = SMatrix<f64, 3, ELEMENT_DOFS>;

const CORNER_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Shape-function gradients of an axis-aligned brick of size `h` at the
/// natural point `xi`.
pub fn shape_gradients(h: [f64; 3], xi: [f64; 3]) -> [[f64; 3]; 8] {
    CORNER_SIGNS.map(|s| {
        let f = [1.0 + s[0] * xi[0], 1.0 + s[1] * xi[1], 1.0 + s[2] * xi[2]];
        [
            0.125 * s[0] * f[1] * f[2] * 2.0 / h[0],
            0.125 * f[0] * s[1] * f[2] * 2.0 / h[1],
            0.125 * f[0] * f[1] * s[2] * 2.0 / h[2],
        ]
    })
}

pub fn shape_values(xi: [f64; 3]) -> [f64; 8] {
    CORNER_SIGNS.map(|s| 0.125 * (1.0 + s[0] * xi[0]) * (1.0 + s[1] * xi[1]) * (1.0 + s[2] * xi[2]))
}

/// Strain (engineering shears) and potential-gradient operators.
pub fn operators(grads: &[[f64; 3]; 8]) -> (StrainOperator, GradientOperator) {
    let mut b = StrainOperator::zeros();
    let mut g = GradientOperator::zeros();
    for (a, gr) in grads.iter().enumerate() {
        let c = DOFS_PER_NODE * a;
        b[(0, c)] = gr[0];
        b[(1, c + 1)] = gr[1];
        b[(2, c + 2)] = gr[2];
        b[(3, c + 1)] = gr[2];
        b[(3, c + 2)] = gr[1];
        b[(4, c)] = gr[2];
        b[(4, c + 2)] = gr[0];
        b[(5, c)] = gr[1];
        b[(5, c + 1)] = gr[0];
        for k in 0..3 {
            g[(k, c + 3)] = gr[k];
        }
    }
    (b, g)
}

/// 2×2×2 Gauss points with weight 1 on `[-1, 1]³`.
pub fn gauss_points() -> [[f64; 3]; 8] {
    let q = 1.0 / 3f64.sqrt();
    CORNER_SIGNS.map(|s| [s[0] * q, s[1] * q, s[2] * q])
}

/// Everything the global and local systems need from one element.
#[derive(Clone, Debug)]
pub struct ElementEval {
    /// Internal forces (displacement rows) and charges (potential rows).
    pub residual: ElemVector,
    /// `∂residual/∂a` at fixed polarization.
    pub k_aa: ElemMatrix,
    /// `∂residual/∂P`.
    pub k_ap: SMatrix<f64, ELEMENT_DOFS, 3>,
    /// Volume-averaged driving force.
    pub driving_force: Vector3<f64>,
    /// `∂Ê/∂P` (averaged, total through the stress).
    pub dehat_dp: Matrix3<f64>,
    /// `∂Ê/∂a` (averaged).
    pub dehat_da: SMatrix<f64, 3, ELEMENT_DOFS>,
    pub volume: f64,
    /// Volume averages of the Gauss-point fields.
    pub stress: SymTensor2,
    pub strain: SymTensor2,
    pub field: Vector3<f64>,
    pub displacement: Vector3<f64>,
}

/// Evaluates a brick of size `h` with nodal values `a`, polarization `pol`
/// and saturation multiplier `lambda_s`.
pub fn evaluate(h: [f64; 3], a: &ElemVector, pol: &Vector3<f64>, lambda_s: f64, p: &MaterialParams) -> ElementEval {
    let c = p.stiffness().0;
    let d = p.piezo_tensor(pol);
    let dd = p.piezo_tensor_derivative(pol);
    let de = p.remanent_strain_derivative(pol);
    let eps_i = p.remanent_strain(pol).as_vector();
    let dm = d.0;
    let volume = h[0] * h[1] * h[2];
    let w = volume / 8.0;
    let ident = Matrix3::identity();

    let mut out = ElementEval {
        residual: ElemVector::zeros(),
        k_aa: ElemMatrix::zeros(),
        k_ap: SMatrix::zeros(),
        driving_force: Vector3::zeros(),
        dehat_dp: Matrix3::zeros(),
        dehat_da: SMatrix::zeros(),
        volume,
        stress: SymTensor2::ZERO,
        strain: SymTensor2::ZERO,
        field: Vector3::zeros(),
        displacement: Vector3::zeros(),
    };
    let mut stress_sum = Vector6::zeros();
    let mut strain_sum = Vector6::zeros();

    for xi in gauss_points() {
        let (b, g) = operators(&shape_gradients(h, xi));
        let strain = b * a;
        let field = -(g * a);
        let sig = c * (strain - eps_i - dm.transpose() * field);
        let sigma = SymTensor2::from_vector(&sig);
        let disp = dm * sig + field * p.permittivity + pol;

        // M_m = ∂ε_I/∂P_m + (∂d/∂P_m)ᵀ E and T[:, m] = (∂d/∂P_m) σ
        let mut m = SMatrix::<f64, 6, 3>::zeros();
        let mut t = Matrix3::zeros();
        for k in 0..3 {
            m.set_column(k, &(de[k].as_vector() + dd[k].0.transpose() * field));
            t.set_column(k, &(dd[k].0 * sig));
        }
        let cd = c * dm.transpose();
        let dsig_da = c * b + cd * g;
        let dd_da = dm * c * b + (dm * cd - ident * p.permittivity) * g;
        let dsig_dp = -(c * m);
        let dd_dp = t + ident + dm * dsig_dp;

        out.residual += (b.transpose() * sig + g.transpose() * disp) * w;
        out.k_aa += (b.transpose() * dsig_da + g.transpose() * dd_da) * w;
        out.k_ap += (b.transpose() * dsig_dp + g.transpose() * dd_dp) * w;

        let ehat = p.driving_force(&sigma, &field, pol, lambda_s);
        let hess = p.driving_force_jacobian(&sigma, &field, pol, lambda_s);
        out.driving_force += ehat * w;
        out.dehat_dp += (hess + m.transpose() * dsig_dp) * w;
        out.dehat_da += (m.transpose() * dsig_da - (ident + t.transpose()) * g) * w;

        stress_sum += sig * w;
        strain_sum += strain * w;
        out.field += field * w;
        out.displacement += disp * w;
    }
    let inv = 1.0 / volume;
    out.driving_force *= inv;
    out.dehat_dp *= inv;
    out.dehat_da *= inv;
    out.field *= inv;
    out.displacement *= inv;
    out.stress = SymTensor2::from_vector(&(stress_sum * inv));
    out.strain = SymTensor2::from_vector(&(strain_sum * inv));
    out
}
