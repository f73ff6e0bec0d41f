//! Banded LU factorization with partial pivoting.
//!
//! Nodal unknowns are numbered slab by slab along the longest axis, which
//! keeps the bandwidth of structured meshes small. The matrix is symmetrically
//! equilibrated before factorization because displacement and potential rows
//! differ by many orders of magnitude.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major storage of width `2 kl + ku + 1`; `a[i][j - i + kl]`.
    /// The extra `kl` columns hold fill-in from row exchanges.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix { n, kl, ku, data: vec![0.0; n * (2 * kl + ku + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku + self.kl {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)`; the entry must lie inside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Solves `A x = b`, consuming the matrix.
    pub fn solve(mut self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        assert_eq!(b.len(), n);
        if n == 0 {
            return Ok(Vec::new());
        }
        // symmetric equilibration
        let scale: Vec<f64> = (0..n)
            .map(|i| {
                let d = self.data[self.idx(i, i)].abs();
                if d > 0.0 && d.is_finite() {
                    1.0 / d.sqrt()
                } else {
                    let row = (i.saturating_sub(self.kl)..=(i + self.ku).min(n - 1))
                        .map(|j| self.data[self.idx(i, j)].abs())
                        .fold(0.0, f64::max);
                    if row > 0.0 {
                        1.0 / row.sqrt()
                    } else {
                        1.0
                    }
                }
            })
            .collect();
        for i in 0..n {
            for j in i.saturating_sub(self.kl)..=(i + self.ku).min(n - 1) {
                let k = self.idx(i, j);
                self.data[k] *= scale[i] * scale[j];
            }
        }
        let mut rhs: Vec<f64> = b.iter().zip(&scale).map(|(v, s)| v * s).collect();

        let (kl, ku) = (self.kl, self.ku);
        let reach = kl + ku;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut piv = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularMatrix { context: format!("banded factorization at pivot {k} of {n}") });
            }
            let last_col = (k + reach).min(n - 1);
            if piv != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(piv, j));
                    self.data.swap(a, b);
                }
                rhs.swap(k, piv);
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[ik] = 0.0;
                let base_i = self.idx(i, k + 1);
                let base_k = self.idx(k, k + 1);
                let len = last_col - k;
                for t in 0..len {
                    self.data[base_i + t] -= l * self.data[base_k + t];
                }
                rhs[i] -= l * rhs[k];
            }
        }
        // back substitution
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut acc = rhs[k];
            for j in k + 1..=last_col {
                acc -= self.data[self.idx(k, j)] * rhs[j];
            }
            rhs[k] = acc / self.data[self.idx(k, k)];
        }
        Ok(rhs.iter().zip(&scale).map(|(v, s)| v * s).collect())
    }
}
