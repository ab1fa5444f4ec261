//! Jacobi-preconditioned conjugate gradients, with an optional projection
//! onto the mean-zero subspace for singular periodic systems.

use serde::{Deserialize, Serialize};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when `|b - K x| / |b|` falls below this.
    pub rel_tol: f64,
    /// Iteration cap; `None` means `50 * sqrt(unknowns) + 1000`.
    pub max_iter: Option<usize>,
    /// Largest admissible `|1^T b| / |b|` for mean-zero solves.
    pub compat_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel_tol: 1e-10,
            max_iter: None,
            compat_tol: 1e-8,
        }
    }
}

impl SolverOptions {
    pub fn iteration_cap(&self, unknowns: usize) -> usize {
        self.max_iter
            .unwrap_or(50 * (unknowns as f64).sqrt().ceil() as usize + 1000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// True residual `|b - K x| / |b|` of the returned iterate.
    pub rel_residual: f64,
}

/// `|1^T b| / |b|_2`, zero for `b = 0`.
pub fn compatibility_residual(b: &[f64]) -> f64 {
    let norm = par::dot(b, b).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    par::sum_range(b.len(), |i| b[i]).abs() / norm
}

fn project_mean_zero(v: &mut [f64]) {
    let mean = par::sum_range(v.len(), |i| v[i]) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Solves `K x = b` on the complement of the constant vector.
///
/// `K` must be symmetric positive semidefinite with kernel spanned by the
/// constants. The returned `x` has zero sum.
pub fn solve_mean_zero(
    matrix: &CsrMatrix,
    rhs: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    let residual = compatibility_residual(rhs);
    if residual > opts.compat_tol {
        return Err(Error::IncompatibleRhs {
            residual,
            tolerance: opts.compat_tol,
        });
    }
    pcg(matrix, rhs, opts, true)
}

/// Solves `K x = b` for symmetric positive definite `K`.
pub fn solve_spd(
    matrix: &CsrMatrix,
    rhs: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    pcg(matrix, rhs, opts, false)
}

fn pcg(
    matrix: &CsrMatrix,
    rhs: &[f64],
    opts: &SolverOptions,
    mean_zero: bool,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = matrix.nrows();
    assert_eq!(rhs.len(), n, "rhs length does not match matrix");
    let mut b = rhs.to_vec();
    if mean_zero {
        project_mean_zero(&mut b);
    }
    let b_norm = par::dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                rel_residual: 0.0,
            },
        ));
    }

    let inv_diag: Vec<f64> = matrix
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |r: &[f64], z: &mut [f64]| {
        par::fill_indexed(z, |i| inv_diag[i] * r[i]);
        if mean_zero {
            project_mean_zero(z);
        }
    };

    let cap = opts.iteration_cap(n);
    let mut r = b.clone();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = par::dot(&r, &z);
    let mut iterations = 0;
    let mut rel = 1.0;

    while iterations < cap {
        matrix.spmv(&p, &mut q);
        let pq = par::dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        par::axpy(alpha, &p, &mut x);
        par::axpy(-alpha, &q, &mut r);
        if mean_zero {
            project_mean_zero(&mut r);
        }
        iterations += 1;
        rel = par::dot(&r, &r).sqrt() / b_norm;
        if rel <= opts.rel_tol {
            break;
        }
        precondition(&r, &mut z);
        let rz_next = par::dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        par::xpby(&z, beta, &mut p);
    }

    if mean_zero {
        project_mean_zero(&mut x);
    }
    let kx = matrix.mul(&x);
    let true_rel = par::sum_range(n, |i| (b[i] - kx[i]).powi(2)).sqrt() / b_norm;
    // The recursive residual can drift below the true one; accept a small margin.
    if rel > opts.rel_tol || true_rel > 10.0 * opts.rel_tol {
        return Err(Error::NoConvergence {
            iterations,
            residual: true_rel.max(rel),
        });
    }
    Ok((
        x,
        SolveStats {
            iterations,
            rel_residual: true_rel,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic_laplacian_1d(n: usize) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut row = vec![(i, 2.0), ((i + 1) % n, -1.0), ((i + n - 1) % n, -1.0)];
                row.sort_by_key(|e| e.0);
                row
            })
            .collect();
        CsrMatrix::from_rows(rows)
    }

    #[test]
    fn recovers_mean_zero_solution() {
        let k = periodic_laplacian_1d(40);
        let w: Vec<f64> = (0..40).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let mean = w.iter().sum::<f64>() / 40.0;
        let w: Vec<f64> = w.iter().map(|v| v - mean).collect();
        let b = k.mul(&w);
        let (x, stats) = solve_mean_zero(&k, &b, &SolverOptions::default()).unwrap();
        assert!(stats.rel_residual <= 1e-9);
        for (a, b) in x.iter().zip(&w) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_constant_rhs() {
        let k = periodic_laplacian_1d(10);
        let err = solve_mean_zero(&k, &[1.0; 10], &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::IncompatibleRhs { .. }));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let k = periodic_laplacian_1d(10);
        let (x, stats) = solve_mean_zero(&k, &[0.0; 10], &SolverOptions::default()).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let k = periodic_laplacian_1d(200);
        let b: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let b = {
            let m = b.iter().sum::<f64>() / 200.0;
            b.iter().map(|v| v - m).collect::<Vec<_>>()
        };
        let opts = SolverOptions {
            max_iter: Some(3),
            ..Default::default()
        };
        assert!(matches!(
            solve_mean_zero(&k, &b, &opts),
            Err(Error::NoConvergence { iterations: 3, .. })
        ));
    }
}
