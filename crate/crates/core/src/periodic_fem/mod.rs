//! Multilinear finite elements on uniform tensor grids over `[0, 1]^n`.
//!
//! A [`Grid`] is either periodic (opposite faces identified, one unknown per
//! node class, constants in the kernel) or Dirichlet (boundary nodes
//! eliminated). Both share the same element, quadrature and assembly code.

mod solver;
mod sparse;

use crate::coeff_fields::CoefficientField;
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Tensor, MAX_DIM};

pub use solver::{compatibility_residual, solve_mean_zero, solve_spd, SolveStats, SolverOptions};
pub use sparse::CsrMatrix;

/// Element corner count upper bound (`2^MAX_DIM`).
const MAX_CORNERS: usize = 1 << MAX_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    Dirichlet,
}

/// Uniform grid with `cells` elements per side on the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    dim: usize,
    cells: usize,
    boundary: Boundary,
}

/// Builds the periodic cell grid on `Y = (0, 1)^n`.
pub fn build_grid(dim: usize, cells_per_side: usize) -> Result<Grid> {
    Grid::new(dim, cells_per_side, Boundary::Periodic)
}

/// Node multi-index.
pub type Node = [usize; MAX_DIM];

impl Grid {
    pub fn new(dim: usize, cells: usize, boundary: Boundary) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        if cells < 2 {
            return Err(Error::InvalidGrid(cells));
        }
        Ok(Grid {
            dim,
            cells,
            boundary,
        })
    }

    pub fn periodic(dim: usize, cells: usize) -> Result<Self> {
        Grid::new(dim, cells, Boundary::Periodic)
    }

    pub fn dirichlet(dim: usize, cells: usize) -> Result<Self> {
        Grid::new(dim, cells, Boundary::Dirichlet)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn cells_per_side(&self) -> usize {
        self.cells
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    #[inline]
    pub fn corners(&self) -> usize {
        1 << self.dim
    }

    /// Unknowns per side: `N` (periodic) or `N - 1` (Dirichlet interior).
    fn unknowns_per_side(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => self.cells,
            Boundary::Dirichlet => self.cells - 1,
        }
    }

    pub fn num_unknowns(&self) -> usize {
        self.unknowns_per_side().pow(self.dim as u32)
    }

    pub fn num_elements(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    /// Geometric nodes, `(N + 1)^n`.
    pub fn num_nodes(&self) -> usize {
        (self.cells + 1).pow(self.dim as u32)
    }

    /// Unknown index of a geometric node (`0..=N` per axis), `None` on a Dirichlet boundary.
    #[inline]
    pub fn node_unknown(&self, node: &Node) -> Option<usize> {
        let side = self.unknowns_per_side();
        let mut idx = 0;
        for d in (0..self.dim).rev() {
            let i = match self.boundary {
                Boundary::Periodic => node[d] % self.cells,
                Boundary::Dirichlet => {
                    if node[d] == 0 || node[d] >= self.cells {
                        return None;
                    }
                    node[d] - 1
                }
            };
            idx = idx * side + i;
        }
        Some(idx)
    }

    /// Representative geometric node of an unknown.
    pub fn unknown_node(&self, unknown: usize) -> Node {
        let side = self.unknowns_per_side();
        let offset = match self.boundary {
            Boundary::Periodic => 0,
            Boundary::Dirichlet => 1,
        };
        let mut node = [0; MAX_DIM];
        let mut rest = unknown;
        for slot in node.iter_mut().take(self.dim) {
            *slot = rest % side + offset;
            rest /= side;
        }
        node
    }

    /// Geometric node from a flat index over `(N + 1)^n` nodes.
    pub fn node_from_flat(&self, flat: usize) -> Node {
        let mut node = [0; MAX_DIM];
        let mut rest = flat;
        for slot in node.iter_mut().take(self.dim) {
            *slot = rest % (self.cells + 1);
            rest /= self.cells + 1;
        }
        node
    }

    pub fn node_coords(&self, node: &Node) -> [f64; MAX_DIM] {
        let h = self.h();
        let mut x = [0.0; MAX_DIM];
        for d in 0..self.dim {
            x[d] = node[d] as f64 * h;
        }
        x
    }

    /// Lower corner node of an element.
    pub fn element_origin(&self, element: usize) -> Node {
        let mut node = [0; MAX_DIM];
        let mut rest = element;
        for slot in node.iter_mut().take(self.dim) {
            *slot = rest % self.cells;
            rest /= self.cells;
        }
        node
    }

    fn element_index(&self, origin: &Node) -> usize {
        (0..self.dim)
            .rev()
            .fold(0, |acc, d| acc * self.cells + origin[d])
    }

    /// Node of local corner `local` (bit `d` set means `+1` along axis `d`).
    #[inline]
    pub fn corner_node(&self, origin: &Node, local: usize) -> Node {
        let mut node = *origin;
        for (d, slot) in node.iter_mut().enumerate().take(self.dim) {
            *slot += (local >> d) & 1;
        }
        node
    }

    /// Unknowns of an element's corners (`None` for eliminated Dirichlet nodes).
    pub fn element_unknowns(&self, element: usize) -> [Option<usize>; MAX_CORNERS] {
        let origin = self.element_origin(element);
        let mut out = [None; MAX_CORNERS];
        for (local, slot) in out.iter_mut().enumerate().take(self.corners()) {
            *slot = self.node_unknown(&self.corner_node(&origin, local));
        }
        out
    }

    pub fn element_center(&self, element: usize) -> [f64; MAX_DIM] {
        let origin = self.element_origin(element);
        let h = self.h();
        let mut c = [0.0; MAX_DIM];
        for d in 0..self.dim {
            c[d] = (origin[d] as f64 + 0.5) * h;
        }
        c
    }

    /// Nodal values of one element, zero at eliminated nodes.
    pub fn element_values(&self, element: usize, values: &[f64]) -> [f64; MAX_CORNERS] {
        let unknowns = self.element_unknowns(element);
        let mut out = [0.0; MAX_CORNERS];
        for (o, u) in out.iter_mut().zip(unknowns.iter()).take(self.corners()) {
            if let Some(u) = u {
                *o = values[*u];
            }
        }
        out
    }

    /// Element containing `x` and local coordinates in `[0, 1]^n`.
    ///
    /// Periodic grids wrap `x` into `[0, 1)^n`; Dirichlet grids clamp into the domain.
    pub fn locate(&self, x: &[f64]) -> (usize, [f64; MAX_DIM]) {
        let n = self.cells as f64;
        let mut origin = [0; MAX_DIM];
        let mut xi = [0.0; MAX_DIM];
        for d in 0..self.dim {
            let t = match self.boundary {
                Boundary::Periodic => x[d].rem_euclid(1.0) * n,
                Boundary::Dirichlet => x[d].clamp(0.0, 1.0) * n,
            };
            let e = (t.floor() as usize).min(self.cells - 1);
            origin[d] = e;
            xi[d] = t - e as f64;
        }
        (self.element_index(&origin), xi)
    }

    /// Multilinear interpolation of node data given by `value(node)`.
    ///
    /// Returns the value and the gradient of the interpolant on the
    /// element containing `x`.
    pub fn interpolate_nodal<F>(&self, x: &[f64], value: F) -> (f64, [f64; MAX_DIM])
    where
        F: Fn(&Node) -> f64,
    {
        let (element, xi) = self.locate(x);
        let origin = self.element_origin(element);
        let mut corner_values = [0.0; MAX_CORNERS];
        for (local, v) in corner_values.iter_mut().enumerate().take(self.corners()) {
            *v = value(&self.corner_node(&origin, local));
        }
        let shape = ShapeEval::at(self.dim, &xi, self.h());
        shape.combine(&corner_values)
    }
}

/// Shape function values and physical gradients at one reference point.
#[derive(Debug, Clone, Copy)]
pub struct ShapeEval {
    corners: usize,
    pub values: [f64; MAX_CORNERS],
    pub grads: [[f64; MAX_DIM]; MAX_CORNERS],
}

impl ShapeEval {
    /// Evaluates all corner shape functions at local coordinates `xi` on an element of width `h`.
    pub fn at(dim: usize, xi: &[f64; MAX_DIM], h: f64) -> Self {
        let corners = 1 << dim;
        let mut values = [0.0; MAX_CORNERS];
        let mut grads = [[0.0; MAX_DIM]; MAX_CORNERS];
        for local in 0..corners {
            let factor = |d: usize| {
                if (local >> d) & 1 == 1 {
                    xi[d]
                } else {
                    1.0 - xi[d]
                }
            };
            values[local] = (0..dim).map(factor).product();
            for d in 0..dim {
                let sign = if (local >> d) & 1 == 1 { 1.0 } else { -1.0 };
                let rest: f64 = (0..dim).filter(|&e| e != d).map(factor).product();
                grads[local][d] = sign * rest / h;
            }
        }
        ShapeEval {
            corners,
            values,
            grads,
        }
    }

    /// Value and gradient of `sum_c v_c phi_c`.
    #[inline]
    pub fn combine(&self, corner_values: &[f64; MAX_CORNERS]) -> (f64, [f64; MAX_DIM]) {
        let mut v = 0.0;
        let mut g = [0.0; MAX_DIM];
        for c in 0..self.corners {
            v += self.values[c] * corner_values[c];
            for d in 0..MAX_DIM {
                g[d] += self.grads[c][d] * corner_values[c];
            }
        }
        (v, g)
    }
}

/// Tensor-product two-point Gauss rule on one element, plus the centre point.
#[derive(Debug, Clone)]
pub struct ElementRule {
    dim: usize,
    h: f64,
    /// Local coordinates and weights (already scaled by the element volume).
    points: Vec<([f64; MAX_DIM], f64)>,
    shapes: Vec<ShapeEval>,
    center: ShapeEval,
}

impl ElementRule {
    pub fn gauss2(grid: &Grid) -> Self {
        let dim = grid.dim();
        let h = grid.h();
        let g = 0.5 / 3.0_f64.sqrt();
        let nodes = [0.5 - g, 0.5 + g];
        let volume = h.powi(dim as i32);
        let count = 1 << dim;
        let mut points = Vec::with_capacity(count);
        for q in 0..count {
            let mut xi = [0.0; MAX_DIM];
            for (d, slot) in xi.iter_mut().enumerate().take(dim) {
                *slot = nodes[(q >> d) & 1];
            }
            points.push((xi, volume / count as f64));
        }
        let shapes = points
            .iter()
            .map(|(xi, _)| ShapeEval::at(dim, xi, h))
            .collect();
        let center = ShapeEval::at(dim, &[0.5; MAX_DIM], h);
        ElementRule {
            dim,
            h,
            points,
            shapes,
            center,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn center_shape(&self) -> &ShapeEval {
        &self.center
    }

    /// Quadrature points of `element` on `grid`.
    pub fn points<'a>(
        &'a self,
        grid: &'a Grid,
        element: usize,
    ) -> impl Iterator<Item = QuadPoint<'a>> + 'a {
        let origin = grid.element_origin(element);
        let center = grid.element_center(element);
        self.points
            .iter()
            .zip(&self.shapes)
            .map(move |((xi, w), shape)| {
                let mut x = [0.0; MAX_DIM];
                for d in 0..self.dim {
                    x[d] = (origin[d] as f64 + xi[d]) * self.h;
                }
                QuadPoint {
                    element,
                    x,
                    center,
                    weight: *w,
                    shape,
                }
            })
    }
}

/// One quadrature point handed to integrand callbacks.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint<'a> {
    pub element: usize,
    /// Physical coordinates.
    pub x: [f64; MAX_DIM],
    /// Centre of the owning element.
    pub center: [f64; MAX_DIM],
    /// Weight including the element volume.
    pub weight: f64,
    pub shape: &'a ShapeEval,
}

impl QuadPoint<'_> {
    /// Value and gradient of a discrete field from its element corner values.
    #[inline]
    pub fn eval(&self, corner_values: &[f64; MAX_CORNERS]) -> (f64, [f64; MAX_DIM]) {
        self.shape.combine(corner_values)
    }
}

/// Evaluates `a(x * scale)` with the per-element sampling convention.
///
/// Smooth fields are sampled at each quadrature point. Piecewise-constant
/// fields are sampled once at the element centre so every element holds a
/// single material.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientSampler<'a> {
    pub field: &'a CoefficientField,
    pub scale: f64,
}

impl<'a> CoefficientSampler<'a> {
    /// Sampler on the unit cell (`y = x`).
    pub fn cell(field: &'a CoefficientField) -> Self {
        CoefficientSampler { field, scale: 1.0 }
    }

    #[inline]
    pub fn at(&self, point: &[f64; MAX_DIM], center: &[f64; MAX_DIM]) -> Tensor {
        let dim = self.field.dim();
        let src = if self.field.is_piecewise_constant() {
            center
        } else {
            point
        };
        let mut y = [0.0; MAX_DIM];
        for d in 0..dim {
            y[d] = src[d] * self.scale;
        }
        self.field.sample(&y[..dim])
    }

    #[inline]
    pub fn at_qp(&self, qp: &QuadPoint<'_>) -> Tensor {
        self.at(&qp.x, &qp.center)
    }
}

fn check_dims(grid: &Grid, field: &CoefficientField) -> Result<()> {
    if grid.dim() != field.dim() {
        return Err(Error::DimensionMismatch(format!(
            "grid is {}-dimensional, field `{}` is {}-dimensional",
            grid.dim(),
            field.name,
            field.dim()
        )));
    }
    Ok(())
}

/// Adjacent `(element, local corner)` pairs of an unknown's representative node.
fn node_patch(grid: &Grid, unknown: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let node = grid.unknown_node(unknown);
    let n = grid.cells_per_side();
    (0..grid.corners()).filter_map(move |local| {
        let mut origin = [0; MAX_DIM];
        for d in 0..grid.dim() {
            let s = (local >> d) & 1;
            origin[d] = match grid.boundary() {
                Boundary::Periodic => (node[d] + n - s) % n,
                Boundary::Dirichlet => node[d].checked_sub(s)?,
            };
            if origin[d] >= n {
                return None;
            }
        }
        Some((grid.element_index(&origin), local))
    })
}

/// Stiffness matrix `K_pq = sum_e int_e grad(phi_q)^T a grad(phi_p)`.
///
/// Element matrices are computed in parallel and gathered row by row in a
/// fixed element order, so the result is bitwise reproducible and exactly
/// symmetric.
pub fn assemble_stiffness(grid: &Grid, sampler: &CoefficientSampler<'_>) -> Result<CsrMatrix> {
    check_dims(grid, sampler.field)?;
    let rule = ElementRule::gauss2(grid);
    let corners = grid.corners();
    let stride = corners * corners;
    let dim = grid.dim();

    let element_mats: Vec<[f64; MAX_CORNERS * MAX_CORNERS]> =
        par::map_range(grid.num_elements(), |e| {
            let mut ke = [0.0; MAX_CORNERS * MAX_CORNERS];
            for qp in rule.points(grid, e) {
                let a = sampler.at_qp(&qp);
                let mut agrad = [[0.0; MAX_DIM]; MAX_CORNERS];
                for (c, ag) in agrad.iter_mut().enumerate().take(corners) {
                    *ag = a.apply(&qp.shape.grads[c]);
                }
                for p in 0..corners {
                    for q in p..corners {
                        let v: f64 = (0..dim).map(|d| qp.shape.grads[p][d] * agrad[q][d]).sum();
                        ke[p * corners + q] += qp.weight * v;
                    }
                }
            }
            for p in 0..corners {
                for q in 0..p {
                    ke[p * corners + q] = ke[q * corners + p];
                }
            }
            ke
        });
    debug_assert!(stride <= MAX_CORNERS * MAX_CORNERS);

    let rows = par::map_range(grid.num_unknowns(), |row| {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(corners * corners);
        for (e, local) in node_patch(grid, row) {
            let unknowns = grid.element_unknowns(e);
            for (t, col) in unknowns.iter().enumerate().take(corners) {
                if let Some(col) = col {
                    entries.push((*col, e, element_mats[e][local * corners + t]));
                }
            }
        }
        merge_row(entries)
    });
    Ok(CsrMatrix::from_rows(rows))
}

fn merge_row(mut entries: Vec<(usize, usize, f64)>) -> Vec<(usize, f64)> {
    entries.sort_by_key(|&(c, e, _)| (c, e));
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (c, _, v) in entries {
        match out.last_mut() {
            Some((lc, lv)) if *lc == c => *lv += v,
            _ => out.push((c, v)),
        }
    }
    out
}

/// Load vector `b_p = int (g phi_p + h . grad phi_p)` with `(g, h)` from `integrand`.
pub fn assemble_linear_functional<F>(grid: &Grid, integrand: F) -> Vec<f64>
where
    F: Fn(&QuadPoint<'_>) -> (f64, [f64; MAX_DIM]) + Sync + Send,
{
    let rule = ElementRule::gauss2(grid);
    let corners = grid.corners();
    let dim = grid.dim();
    let element_vecs: Vec<[f64; MAX_CORNERS]> = par::map_range(grid.num_elements(), |e| {
        let mut be = [0.0; MAX_CORNERS];
        for qp in rule.points(grid, e) {
            let (g, h) = integrand(&qp);
            for (p, b) in be.iter_mut().enumerate().take(corners) {
                let hv: f64 = (0..dim).map(|d| h[d] * qp.shape.grads[p][d]).sum();
                *b += qp.weight * (g * qp.shape.values[p] + hv);
            }
        }
        be
    });
    par::map_range(grid.num_unknowns(), |row| {
        node_patch(grid, row)
            .map(|(e, local)| element_vecs[e][local])
            .sum()
    })
}

/// `int_domain integrand` with the element Gauss rule, deterministic order.
pub fn integrate<F>(grid: &Grid, integrand: F) -> f64
where
    F: Fn(&QuadPoint<'_>) -> f64 + Sync + Send,
{
    let rule = ElementRule::gauss2(grid);
    par::sum_range(grid.num_elements(), |e| {
        rule.points(grid, e)
            .map(|qp| qp.weight * integrand(&qp))
            .sum()
    })
}

/// A scalar field with one value per unknown of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl PeriodicField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.num_unknowns(), "value count mismatch");
        PeriodicField { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        PeriodicField::new(grid, vec![0.0; grid.num_unknowns()])
    }

    /// Value at a geometric node (zero at eliminated Dirichlet nodes).
    pub fn node_value(&self, node: &Node) -> f64 {
        self.grid.node_unknown(node).map_or(0.0, |u| self.values[u])
    }

    /// Multilinear interpolant and its gradient at `y`.
    pub fn interpolate(&self, y: &[f64]) -> (f64, [f64; MAX_DIM]) {
        self.grid.interpolate_nodal(y, |node| self.node_value(node))
    }

    /// `int_Y v` under the element rule.
    pub fn mean(&self) -> f64 {
        integrate(&self.grid, |qp| {
            qp.eval(&self.grid.element_values(qp.element, &self.values))
                .0
        })
    }

    /// Maximum of `|v|` over nodes.
    pub fn sup_nodes(&self) -> f64 {
        par::max_range(self.values.len(), |i| self.values[i].abs())
    }

    /// Maximum of `|v|` and of `|grad v|` over element midpoints.
    pub fn sup_midpoints(&self) -> (f64, f64) {
        let rule = ElementRule::gauss2(&self.grid);
        let center = *rule.center_shape();
        let vals = par::map_range(self.grid.num_elements(), |e| {
            let (v, g) = center.combine(&self.grid.element_values(e, &self.values));
            (v.abs(), norm(&g))
        });
        vals.into_iter()
            .fold((0.0_f64, 0.0_f64), |(a, b), (v, g)| (a.max(v), b.max(g)))
    }

    /// `(|u - v|_L2, |grad(u - v)|_L2)` between two discretizations of the
    /// same function, integrated on the finer grid (cells must nest).
    pub fn distance(&self, other: &PeriodicField) -> (f64, f64) {
        let (fine, coarse) = if self.grid.cells_per_side() >= other.grid.cells_per_side() {
            (self, other)
        } else {
            (other, self)
        };
        assert_eq!(
            fine.grid.cells_per_side() % coarse.grid.cells_per_side(),
            0,
            "grids must nest"
        );
        let l2 = integrate(&fine.grid, |qp| {
            let (v, _) = qp.eval(&fine.grid.element_values(qp.element, &fine.values));
            let (w, _) = coarse.interpolate(&qp.x[..fine.grid.dim()]);
            (v - w).powi(2)
        });
        let h1 = integrate(&fine.grid, |qp| {
            let (_, gv) = qp.eval(&fine.grid.element_values(qp.element, &fine.values));
            let (_, gw) = coarse.interpolate(&qp.x[..fine.grid.dim()]);
            (0..MAX_DIM).map(|d| (gv[d] - gw[d]).powi(2)).sum()
        });
        (l2.sqrt(), h1.sqrt())
    }
}

#[inline]
pub(crate) fn norm(v: &[f64; MAX_DIM]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves a periodic system on the mean-zero subspace.
pub fn solve_periodic(
    grid: &Grid,
    matrix: &CsrMatrix,
    rhs: &[f64],
    opts: &SolverOptions,
) -> Result<(PeriodicField, SolveStats)> {
    let (values, stats) = solve_mean_zero(matrix, rhs, opts)?;
    Ok((PeriodicField::new(*grid, values), stats))
}
