//! Small dense matrices of runtime dimension `n <= MAX_DIM`, stored inline.

use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 3;

/// An `n x n` matrix held in a fixed `MAX_DIM x MAX_DIM` array.
///
/// Entries outside the leading `n x n` block are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    n: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl Tensor {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "dimension {n} out of range");
        Tensor {
            n,
            m: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        let mut t = Tensor::zeros(n);
        for i in 0..n {
            t.m[i][i] = c;
        }
        t
    }

    pub fn identity(n: usize) -> Self {
        Tensor::scaled_identity(n, 1.0)
    }

    /// Builds from row slices; panics if the rows are not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut t = Tensor::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "non-square matrix");
            t.m[i][..n].copy_from_slice(row);
        }
        t
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.m[i][j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.m[i][..self.n].to_vec()).collect()
    }

    /// `a * v`, for a vector stored in a `MAX_DIM` array.
    #[inline]
    pub fn apply(&self, v: &[f64; MAX_DIM]) -> [f64; MAX_DIM] {
        let mut out = [0.0; MAX_DIM];
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = (0..self.n).map(|j| self.m[i][j] * v[j]).sum();
        }
        out
    }

    /// `u^T a v`.
    #[inline]
    pub fn bilinear(&self, u: &[f64; MAX_DIM], v: &[f64; MAX_DIM]) -> f64 {
        let av = self.apply(v);
        (0..self.n).map(|i| u[i] * av[i]).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut d = 0.0_f64;
        for i in 0..self.n {
            for j in 0..self.n {
                d = d.max((self.m[i][j] - self.m[j][i]).abs());
            }
        }
        d
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        let mut d = 0.0_f64;
        for i in 0..self.n {
            for j in 0..self.n {
                d = d.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0_f64, |a, b| a.max(b.abs()))
    }

    /// Eigenvalues of the symmetric part, ascending (Jacobi rotations).
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = 0.5 * (self.m[i][j] + self.m[j][i]);
            }
        }
        for _sweep in 0..50 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}
