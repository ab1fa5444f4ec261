//! Resolved solve of `-div(a(x/eps) grad u) = f` on the unit square with
//! homogeneous Dirichlet data.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeff_fields::CoefficientField;
use crate::error::{Error, Result};
use crate::periodic_fem::{
    assemble_linear_functional, assemble_stiffness, integrate, solve_spd, CoefficientSampler, Grid,
    SolveStats, SolverOptions,
};
use crate::tensor::MAX_DIM;

/// Minimum elements per period.
pub const MIN_RESOLUTION_FACTOR: usize = 8;

/// Period `eps = 1 / periods`, so that whole cells tile the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Epsilon {
    periods: usize,
}

impl Epsilon {
    pub fn reciprocal(periods: usize) -> Self {
        assert!(periods > 0, "epsilon reciprocal must be positive");
        Epsilon { periods }
    }

    /// Accepts `eps` when `1 / eps` is an integer (to 1e-9 relative).
    pub fn from_value(eps: f64) -> Option<Self> {
        if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
            return None;
        }
        let inv = 1.0 / eps;
        let rounded = inv.round();
        ((inv - rounded).abs() <= 1e-9 * inv).then(|| Epsilon::reciprocal(rounded as usize))
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn value(&self) -> f64 {
        1.0 / self.periods as f64
    }
}

impl std::fmt::Display for Epsilon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "1/{}", self.periods)
    }
}

/// Nodal solution on the fine Dirichlet grid.
#[derive(Debug, Clone)]
pub struct FineSolution {
    pub grid: Grid,
    pub field: CoefficientField,
    pub epsilon: Epsilon,
    pub resolution_factor: usize,
    /// One value per interior node.
    pub values: Vec<f64>,
    pub stats: SolveStats,
    load: Vec<f64>,
}

/// Solves the oscillatory problem with `resolution_factor` elements per period.
pub fn solve_fine<F>(
    field: &CoefficientField,
    epsilon: Epsilon,
    source: F,
    resolution_factor: usize,
    opts: &SolverOptions,
) -> Result<FineSolution>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if resolution_factor < MIN_RESOLUTION_FACTOR {
        return Err(Error::ResolutionTooCoarse(resolution_factor));
    }
    let dim = field.dim();
    let grid = Grid::dirichlet(dim, resolution_factor * epsilon.periods())?;
    let sampler = CoefficientSampler {
        field,
        scale: epsilon.periods() as f64,
    };
    let matrix = assemble_stiffness(&grid, &sampler)?;
    let load = assemble_linear_functional(&grid, |qp| (source(&qp.x[..dim]), [0.0; MAX_DIM]));
    let (values, stats) = solve_spd(&matrix, &load, opts)?;
    Ok(FineSolution {
        grid,
        field: field.clone(),
        epsilon,
        resolution_factor,
        values,
        stats,
        load,
    })
}

impl FineSolution {
    pub fn sampler(&self) -> CoefficientSampler<'_> {
        CoefficientSampler {
            field: &self.field,
            scale: self.epsilon.periods() as f64,
        }
    }

    /// Value at a geometric node; zero on the boundary.
    pub fn node_value(&self, node: &[usize; MAX_DIM]) -> f64 {
        self.grid.node_unknown(node).map_or(0.0, |u| self.values[u])
    }

    pub fn interpolate(&self, x: &[f64]) -> (f64, [f64; MAX_DIM]) {
        self.grid.interpolate_nodal(x, |n| self.node_value(n))
    }

    /// `int a(x/eps) |grad u_h|^2`.
    pub fn energy(&self) -> f64 {
        let sampler = self.sampler();
        integrate(&self.grid, |qp| {
            let (_, g) = qp.eval(&self.grid.element_values(qp.element, &self.values));
            sampler.at_qp(qp).bilinear(&g, &g)
        })
    }

    /// `int f u_h` under the same rule as the load vector.
    pub fn load_functional(&self) -> f64 {
        crate::par::dot(&self.load, &self.values)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::min)
    }

    /// All geometric nodes with coordinates, boundary included.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let dim = self.grid.dim();
        let header: Vec<String> = (1..=dim).map(|d| format!("x{d}")).collect();
        writeln!(out, "{},value", header.join(","))?;
        for flat in 0..self.grid.num_nodes() {
            let node = self.grid.node_from_flat(flat);
            let x = self.grid.node_coords(&node);
            let coords: Vec<String> = x[..dim].iter().map(|c| c.to_string()).collect();
            writeln!(out, "{},{}", coords.join(","), self.node_value(&node))?;
        }
        out.flush()?;
        Ok(())
    }
}
