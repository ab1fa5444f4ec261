//! First and second cell problems and the homogenized tensor.
//!
//! First correctors `N_m` solve, for every periodic test function `phi`,
//!
//! ```text
//! int_Y a_ij dN_m/dy_i dphi/dy_j = -int_Y a_mj dphi/dy_j
//! ```
//!
//! and give `a0_ij = int_Y (a_ij + a_il dN_j/dy_l)`. Second correctors
//! `M_kl` solve
//!
//! ```text
//! int_Y a_ij dM_kl/dy_i dphi/dy_j
//!     = int_Y (a_kl + a_km dN_l/dy_m - a0_kl) phi - int_Y a_ik N_l dphi/dy_i
//! ```
//!
//! whose right side annihilates constants because the bracket integrates to
//! `a0_kl - a0_kl`. The discrete `a0` from the same grid and quadrature is used
//! so that cancellation holds to roundoff.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeff_fields::CoefficientField;
use crate::error::Result;
use crate::par;
use crate::periodic_fem::{
    assemble_linear_functional, assemble_stiffness, compatibility_residual, integrate,
    solve_periodic, CoefficientSampler, CsrMatrix, Grid, PeriodicField, SolverOptions,
};
use crate::tensor::{Tensor, MAX_DIM};

/// Effective constant coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedTensor {
    pub a0: Tensor,
}

impl HomogenizedTensor {
    pub fn max_asymmetry(&self) -> f64 {
        self.a0.max_asymmetry()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.a0.sym_eigenvalues()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a0.get(i, j)
    }
}

/// Sup-norm proxies of the correctors: max over nodes and element midpoints
/// for values, over element midpoints for gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorNorms {
    pub first_value: Vec<f64>,
    pub first_grad: Vec<f64>,
    /// Indexed `k * n + l`.
    pub second_value: Vec<f64>,
    pub second_grad: Vec<f64>,
}

/// All cell-problem output for one field on one grid.
#[derive(Debug, Clone)]
pub struct CorrectorSet {
    pub grid: Grid,
    pub field: CoefficientField,
    /// `N_1 .. N_n`.
    pub first: Vec<PeriodicField>,
    /// `M_kl` at index `k * n + l`.
    pub second: Vec<PeriodicField>,
    pub a0: HomogenizedTensor,
    /// `|1^T b_kl| / |b_kl|` for each second-problem right side, index `k * n + l`.
    pub compatibility: Vec<f64>,
}

/// Loads whose entries are all below a few ulps of the natural entry size
/// `Lambda * h^(n-1)` are cancellation noise; they are replaced by exact zeros.
fn snap_roundoff(grid: &Grid, field: &CoefficientField, mut rhs: Vec<f64>) -> Vec<f64> {
    let scale = field.ellipticity_bounds().1 * grid.h().powi(grid.dim() as i32 - 1);
    let floor = 64.0 * f64::EPSILON * scale;
    if rhs.iter().all(|v| v.abs() <= floor) {
        rhs.iter_mut().for_each(|v| *v = 0.0);
    }
    rhs
}

fn stiffness(grid: &Grid, field: &CoefficientField) -> Result<CsrMatrix> {
    assemble_stiffness(grid, &CoefficientSampler::cell(field))
}

fn first_rhs(grid: &Grid, field: &CoefficientField, m: usize) -> Vec<f64> {
    let sampler = CoefficientSampler::cell(field);
    let rhs = assemble_linear_functional(grid, |qp| {
        let a = sampler.at_qp(qp);
        let mut h = [0.0; MAX_DIM];
        for (j, hj) in h.iter_mut().enumerate().take(grid.dim()) {
            *hj = -a.get(m, j);
        }
        (0.0, h)
    });
    snap_roundoff(grid, field, rhs)
}

fn solve_first_with(
    grid: &Grid,
    field: &CoefficientField,
    matrix: &CsrMatrix,
    opts: &SolverOptions,
) -> Result<Vec<PeriodicField>> {
    par::map_range(grid.dim(), |m| {
        let rhs = first_rhs(grid, field, m);
        solve_periodic(grid, matrix, &rhs, opts).map(|(f, _)| f)
    })
    .into_iter()
    .collect()
}

/// Solves the first cell problem for `N_1 .. N_n`.
pub fn solve_first_correctors(
    grid: &Grid,
    field: &CoefficientField,
    opts: &SolverOptions,
) -> Result<Vec<PeriodicField>> {
    let matrix = stiffness(grid, field)?;
    solve_first_with(grid, field, &matrix, opts)
}

/// `[N_j](qp)` gradients for every `j`.
fn corrector_grads(
    first: &[PeriodicField],
    grid: &Grid,
    qp: &crate::periodic_fem::QuadPoint<'_>,
) -> [[f64; MAX_DIM]; MAX_DIM] {
    let mut out = [[0.0; MAX_DIM]; MAX_DIM];
    for (j, nj) in first.iter().enumerate() {
        out[j] = qp.eval(&grid.element_values(qp.element, &nj.values)).1;
    }
    out
}

/// `a0_ij = int_Y (a_ij + a_il dN_j/dy_l)` by the element Gauss rule.
pub fn homogenized_tensor(
    grid: &Grid,
    field: &CoefficientField,
    first: &[PeriodicField],
) -> HomogenizedTensor {
    let n = grid.dim();
    let sampler = CoefficientSampler::cell(field);
    let mut a0 = Tensor::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = integrate(grid, |qp| {
                let a = sampler.at_qp(qp);
                let grad_nj = qp
                    .eval(&grid.element_values(qp.element, &first[j].values))
                    .1;
                a.get(i, j) + (0..n).map(|l| a.get(i, l) * grad_nj[l]).sum::<f64>()
            });
            a0.set(i, j, v);
        }
    }
    HomogenizedTensor { a0 }
}

/// Energy form `int_Y (e_i + grad N_i)^T a (e_j + grad N_j)`.
pub fn energy_tensor(grid: &Grid, field: &CoefficientField, first: &[PeriodicField]) -> Tensor {
    let n = grid.dim();
    let sampler = CoefficientSampler::cell(field);
    let mut out = Tensor::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = integrate(grid, |qp| {
                let a = sampler.at_qp(qp);
                let grads = corrector_grads(first, grid, qp);
                let mut gi = grads[i];
                let mut gj = grads[j];
                gi[i] += 1.0;
                gj[j] += 1.0;
                a.bilinear(&gi, &gj)
            });
            out.set(i, j, v);
        }
    }
    out
}

/// Right side of the `(k, l)` second cell problem and its normalized
/// compatibility residual `|1^T b| / |b|`.
pub fn second_rhs_and_compatibility(
    grid: &Grid,
    field: &CoefficientField,
    first: &[PeriodicField],
    a0: &HomogenizedTensor,
    k: usize,
    l: usize,
) -> (Vec<f64>, f64) {
    let n = grid.dim();
    let sampler = CoefficientSampler::cell(field);
    let nl = &first[l];
    let rhs = assemble_linear_functional(grid, |qp| {
        let a = sampler.at_qp(qp);
        let (nl_val, nl_grad) = qp.eval(&grid.element_values(qp.element, &nl.values));
        let volume =
            a.get(k, l) + (0..n).map(|m| a.get(k, m) * nl_grad[m]).sum::<f64>() - a0.get(k, l);
        let mut h = [0.0; MAX_DIM];
        for (i, hi) in h.iter_mut().enumerate().take(n) {
            *hi = -a.get(i, k) * nl_val;
        }
        (volume, h)
    });
    let rhs = snap_roundoff(grid, field, rhs);
    let residual = compatibility_residual(&rhs);
    (rhs, residual)
}

fn solve_second_with(
    grid: &Grid,
    field: &CoefficientField,
    first: &[PeriodicField],
    a0: &HomogenizedTensor,
    matrix: &CsrMatrix,
    opts: &SolverOptions,
) -> Result<Vec<(PeriodicField, f64)>> {
    let n = grid.dim();
    par::map_range(n * n, |kl| {
        let (rhs, residual) = second_rhs_and_compatibility(grid, field, first, a0, kl / n, kl % n);
        solve_periodic(grid, matrix, &rhs, opts).map(|(f, _)| (f, residual))
    })
    .into_iter()
    .collect()
}

/// Solves the second cell problem for every `M_kl`, returned at index `k * n + l`.
pub fn solve_second_correctors(
    grid: &Grid,
    field: &CoefficientField,
    first: &[PeriodicField],
    a0: &HomogenizedTensor,
    opts: &SolverOptions,
) -> Result<Vec<PeriodicField>> {
    let matrix = stiffness(grid, field)?;
    Ok(solve_second_with(grid, field, first, a0, &matrix, opts)?
        .into_iter()
        .map(|(f, _)| f)
        .collect())
}

impl CorrectorSet {
    /// Runs both cell problems, sharing one stiffness matrix.
    pub fn compute(grid: &Grid, field: &CoefficientField, opts: &SolverOptions) -> Result<Self> {
        let matrix = stiffness(grid, field)?;
        let first = solve_first_with(grid, field, &matrix, opts)?;
        let a0 = homogenized_tensor(grid, field, &first);
        let (second, compatibility) = solve_second_with(grid, field, &first, &a0, &matrix, opts)?
            .into_iter()
            .unzip();
        Ok(CorrectorSet {
            grid: *grid,
            field: field.clone(),
            first,
            second,
            a0,
            compatibility,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn second(&self, k: usize, l: usize) -> &PeriodicField {
        &self.second[k * self.dim() + l]
    }

    pub fn norms(&self) -> CorrectorNorms {
        let split = |fields: &[PeriodicField]| -> (Vec<f64>, Vec<f64>) {
            fields
                .iter()
                .map(|f| {
                    let (mid_v, mid_g) = f.sup_midpoints();
                    (f.sup_nodes().max(mid_v), mid_g)
                })
                .unzip()
        };
        let (first_value, first_grad) = split(&self.first);
        let (second_value, second_grad) = split(&self.second);
        CorrectorNorms {
            first_value,
            first_grad,
            second_value,
            second_grad,
        }
    }

    /// Writes `N_m.csv` and `M_kl.csv` (1-based names) into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let n = self.dim();
        for (m, f) in self.first.iter().enumerate() {
            write_field_csv(&dir.join(format!("N_{}.csv", m + 1)), f)?;
        }
        for k in 0..n {
            for l in 0..n {
                write_field_csv(
                    &dir.join(format!("M_{}{}.csv", k + 1, l + 1)),
                    self.second(k, l),
                )?;
            }
        }
        Ok(())
    }
}

/// Nodal values with coordinates, one row per unknown.
pub fn write_field_csv(path: &Path, field: &PeriodicField) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let dim = field.grid.dim();
    let header: Vec<String> = (1..=dim).map(|d| format!("y{d}")).collect();
    writeln!(out, "{},value", header.join(","))?;
    for (u, v) in field.values.iter().enumerate() {
        let x = field.grid.node_coords(&field.grid.unknown_node(u));
        let coords: Vec<String> = x[..dim].iter().map(|c| c.to_string()).collect();
        writeln!(out, "{},{}", coords.join(","), v)?;
    }
    out.flush()?;
    Ok(())
}
