//! Structured tensor-product brick meshes.
//!
//! Nodes are numbered with `x` slowest and `z` fastest, elements likewise.
//! Local node order of a brick follows the usual convention: the bottom face
//! `(0,0,0) (1,0,0) (1,1,0) (0,1,0)` then the top face in the same order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offsets of the eight local nodes in index space.
pub const HEX_CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
}

/// One graded piece of an axis: `divisions` cells spanning `length`, each
/// cell `ratio` times the previous one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisPiece {
    pub length: f64,
    pub divisions: usize,
    #[serde(default = "unit_ratio")]
    pub ratio: f64,
}

fn unit_ratio() -> f64 {
    1.0
}

/// Node coordinates of an axis built from consecutive pieces.
pub fn axis_coordinates(origin: f64, pieces: &[AxisPiece]) -> Result<Vec<f64>> {
    let mut xs = vec![origin];
    for piece in pieces {
        if !(piece.length > 0.0 && piece.length.is_finite()) || piece.divisions == 0 || !(piece.ratio > 0.0) {
            return Err(Error::Config(format!("invalid axis piece {piece:?}")));
        }
        let weights: Vec<f64> = (0..piece.divisions).map(|i| piece.ratio.powi(i as i32)).collect();
        let total: f64 = weights.iter().sum();
        let start = *xs.last().expect("origin present");
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            xs.push(if i + 1 == piece.divisions { start + piece.length } else { start + piece.length * acc / total });
        }
    }
    Ok(xs)
}

impl Mesh {
    pub fn from_coordinates(xs: Vec<f64>, ys: Vec<f64>, zs: Vec<f64>) -> Result<Self> {
        for (name, axis) in [("x", &xs), ("y", &ys), ("z", &zs)] {
            if axis.len() < 2 {
                return Err(Error::Config(format!("{name} axis needs at least one division")));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite()) {
                return Err(Error::Config(format!("{name} coordinates must increase strictly")));
            }
        }
        Ok(Mesh { xs, ys, zs })
    }

    /// Uniform box `[origin, origin + lengths]` with the given divisions.
    pub fn uniform(origin: [f64; 3], lengths: [f64; 3], divisions: [usize; 3]) -> Result<Self> {
        let axis = |a: usize| axis_coordinates(origin[a], &[AxisPiece { length: lengths[a], divisions: divisions[a], ratio: 1.0 }]);
        Self::from_coordinates(axis(0)?, axis(1)?, axis(2)?)
    }

    pub fn divisions(&self) -> [usize; 3] {
        [self.xs.len() - 1, self.ys.len() - 1, self.zs.len() - 1]
    }

    pub fn n_nodes(&self) -> usize {
        self.xs.len() * self.ys.len() * self.zs.len()
    }

    pub fn n_elements(&self) -> usize {
        let [nx, ny, nz] = self.divisions();
        nx * ny * nz
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        k + self.zs.len() * (j + self.ys.len() * i)
    }

    pub fn node_ijk(&self, n: usize) -> [usize; 3] {
        let nz = self.zs.len();
        let ny = self.ys.len();
        [n / (ny * nz), (n / nz) % ny, n % nz]
    }

    pub fn node_coords(&self, n: usize) -> [f64; 3] {
        let [i, j, k] = self.node_ijk(n);
        [self.xs[i], self.ys[j], self.zs[k]]
    }

    pub fn element_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [_, ny, nz] = self.divisions();
        k + nz * (j + ny * i)
    }

    pub fn element_ijk(&self, e: usize) -> [usize; 3] {
        let [_, ny, nz] = self.divisions();
        [e / (ny * nz), (e / nz) % ny, e % nz]
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 8] {
        let [i, j, k] = self.element_ijk(e);
        HEX_CORNERS.map(|c| self.node_index(i + c[0], j + c[1], k + c[2]))
    }

    pub fn element_size(&self, e: usize) -> [f64; 3] {
        let [i, j, k] = self.element_ijk(e);
        [self.xs[i + 1] - self.xs[i], self.ys[j + 1] - self.ys[j], self.zs[k + 1] - self.zs[k]]
    }

    pub fn element_center(&self, e: usize) -> [f64; 3] {
        let [i, j, k] = self.element_ijk(e);
        [
            0.5 * (self.xs[i] + self.xs[i + 1]),
            0.5 * (self.ys[j] + self.ys[j + 1]),
            0.5 * (self.zs[k] + self.zs[k + 1]),
        ]
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        self.element_size(e).iter().product()
    }

    pub fn nodes_where(&self, pred: impl Fn([f64; 3]) -> bool) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&n| pred(self.node_coords(n))).collect()
    }

    pub fn elements_where(&self, pred: impl Fn([usize; 3]) -> bool) -> Vec<usize> {
        (0..self.n_elements()).filter(|&e| pred(self.element_ijk(e))).collect()
    }

    /// Node closest to `point`.
    pub fn nearest_node(&self, point: [f64; 3]) -> usize {
        let nearest = |axis: &[f64], v: f64| {
            axis.iter()
                .enumerate()
                .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
                .map(|(i, _)| i)
                .expect("axis is not empty")
        };
        self.node_index(nearest(&self.xs, point[0]), nearest(&self.ys, point[1]), nearest(&self.zs, point[2]))
    }

    /// Consistent nodal forces of a uniform traction on the boundary face
    /// `axis = side` (side 0 is the low end, 1 the high end): for every face
    /// quadrilateral each corner receives a quarter of `traction · area`.
    pub fn face_traction_loads(&self, axis: usize, side: usize, traction: [f64; 3]) -> Vec<(usize, [f64; 3])> {
        let axes = [&self.xs, &self.ys, &self.zs];
        let (a1, a2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let fixed = if side == 0 { 0 } else { axes[axis].len() - 1 };
        let mut loads = Vec::new();
        for p in 0..axes[a1].len() - 1 {
            for q in 0..axes[a2].len() - 1 {
                let area = (axes[a1][p + 1] - axes[a1][p]) * (axes[a2][q + 1] - axes[a2][q]);
                for (dp, dq) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
                    let mut ijk = [0usize; 3];
                    ijk[axis] = fixed;
                    ijk[a1] = p + dp;
                    ijk[a2] = q + dq;
                    let n = self.node_index(ijk[0], ijk[1], ijk[2]);
                    loads.push((n, traction.map(|t| 0.25 * t * area)));
                }
            }
        }
        loads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trips() {
        let m = Mesh::uniform([0.0; 3], [2.0, 1.0, 3.0], [4, 2, 3]).unwrap();
        assert_eq!(m.n_nodes(), 5 * 3 * 4);
        assert_eq!(m.n_elements(), 24);
        for n in 0..m.n_nodes() {
            let [i, j, k] = m.node_ijk(n);
            assert_eq!(m.node_index(i, j, k), n);
        }
        for e in 0..m.n_elements() {
            let [i, j, k] = m.element_ijk(e);
            assert_eq!(m.element_index(i, j, k), e);
            assert!((m.element_volume(e) - 0.5 * 0.5 * 1.0).abs() < 1e-15);
        }
        let nodes = m.element_nodes(0);
        assert_eq!(m.node_coords(nodes[6]), [0.5, 0.5, 1.0]);
    }

    #[test]
    fn graded_axis_spans_length() {
        let xs = axis_coordinates(-1.0, &[AxisPiece { length: 0.6, divisions: 3, ratio: 2.0 }, AxisPiece { length: 0.4, divisions: 2, ratio: 1.0 }]).unwrap();
        assert_eq!(xs.len(), 6);
        assert!((xs[3] + 0.4).abs() < 1e-15);
        assert!((xs[5]).abs() < 1e-15);
        assert!(((xs[2] - xs[1]) / (xs[1] - xs[0]) - 2.0).abs() < 1e-12);
        assert!(axis_coordinates(0.0, &[AxisPiece { length: 1.0, divisions: 0, ratio: 1.0 }]).is_err());
    }

    #[test]
    fn traction_loads_sum_to_resultant() {
        let xs = axis_coordinates(0.0, &[AxisPiece { length: 2.0, divisions: 3, ratio: 1.5 }]).unwrap();
        let m = Mesh::from_coordinates(xs, vec![0.0, 0.3, 1.0], vec![0.0, 0.5, 0.7, 2.0]).unwrap();
        let loads = m.face_traction_loads(0, 1, [0.0, 5.0, 0.0]);
        let total: f64 = loads.iter().map(|(_, f)| f[1]).sum();
        assert!((total - 5.0 * 1.0 * 2.0).abs() < 1e-12);
        assert!(loads.iter().all(|(n, _)| m.node_ijk(*n)[0] == 3));
    }

    #[test]
    fn rejects_bad_coordinates() {
        assert!(Mesh::from_coordinates(vec![0.0], vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(Mesh::from_coordinates(vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
    }
}
