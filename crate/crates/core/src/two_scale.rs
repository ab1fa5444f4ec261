//! Manufactured macro solution, two-scale expansion and error norms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::correctors::{CorrectorSet, HomogenizedTensor};
use crate::error::{Error, Result};
use crate::fine_reference::{Epsilon, FineSolution};
use crate::periodic_fem::{norm, ElementRule};
use crate::tensor::MAX_DIM;

/// Interior subdomain `[1/4, 3/4]^n` for local norms.
pub const INTERIOR: (f64, f64) = (0.25, 0.75);

/// Closed-form `u0(x) = prod_d sin(pi x_d)` for a given homogenized tensor.
///
/// The matching source is `f = -a0_ij d2u0/dx_i dx_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroSolution {
    pub a0: HomogenizedTensor,
}

/// `sin(pi x)`, exactly zero at integers and exactly `+-1` at half-integers.
pub fn sin_pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    let (r, sign) = if r >= 1.0 { (r - 1.0, -1.0) } else { (r, 1.0) };
    let r = if r > 0.5 { 1.0 - r } else { r };
    sign * (PI * r).sin()
}

pub fn cos_pi(x: f64) -> f64 {
    sin_pi(x + 0.5)
}

/// `d^k/dx^k sin(pi x)`.
#[inline]
fn sin_derivative(x: f64, k: usize) -> f64 {
    let s = sin_pi(x);
    let c = cos_pi(x);
    let base = match k % 4 {
        0 => s,
        1 => c,
        2 => -s,
        _ => -c,
    };
    PI.powi(k as i32) * base
}

pub fn manufactured_macro(a0: HomogenizedTensor) -> MacroSolution {
    MacroSolution { a0 }
}

impl MacroSolution {
    pub fn dim(&self) -> usize {
        self.a0.a0.dim()
    }

    /// Mixed partial derivative with `orders[d]` derivatives along axis `d`.
    pub fn derivative(&self, x: &[f64], orders: &[usize]) -> f64 {
        (0..self.dim())
            .map(|d| sin_derivative(x[d], orders.get(d).copied().unwrap_or(0)))
            .product()
    }

    /// Partial derivative along the listed axes, e.g. `&[0, 0, 1]` for `u_{x1 x1 x2}`.
    pub fn partial(&self, x: &[f64], axes: &[usize]) -> f64 {
        let mut orders = [0; MAX_DIM];
        for &a in axes {
            orders[a] += 1;
        }
        self.derivative(x, &orders)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.partial(x, &[])
    }

    pub fn gradient(&self, x: &[f64]) -> [f64; MAX_DIM] {
        let mut g = [0.0; MAX_DIM];
        for (i, gi) in g.iter_mut().enumerate().take(self.dim()) {
            *gi = self.partial(x, &[i]);
        }
        g
    }

    pub fn source(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut f = 0.0;
        for i in 0..n {
            for j in 0..n {
                f -= self.a0.get(i, j) * self.partial(x, &[i, j]);
            }
        }
        f
    }
}

/// Truncation order of the two-scale expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExpansionOrder {
    Zeroth,
    First,
    Second,
}

impl ExpansionOrder {
    pub const ALL: [ExpansionOrder; 3] = [
        ExpansionOrder::Zeroth,
        ExpansionOrder::First,
        ExpansionOrder::Second,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExpansionOrder::Zeroth => "Zeroth",
            ExpansionOrder::First => "First",
            ExpansionOrder::Second => "Second",
        }
    }
}

impl std::fmt::Display for ExpansionOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Value and gradient of `u0 + eps u1 + eps^2 u2` truncated at `order`, with
/// `u1 = N_m d_m u0` and `u2 = M_kl d2_kl u0` evaluated at `y = x / eps`.
pub fn evaluate_expansion(
    order: ExpansionOrder,
    correctors: &CorrectorSet,
    macro_solution: &MacroSolution,
    epsilon: Epsilon,
    x: &[f64],
) -> (f64, [f64; MAX_DIM]) {
    let n = correctors.dim();
    let mut value = macro_solution.value(x);
    let mut grad = macro_solution.gradient(x);
    if order == ExpansionOrder::Zeroth {
        return (value, grad);
    }
    let eps = epsilon.value();
    let periods = epsilon.periods() as f64;
    let mut y = [0.0; MAX_DIM];
    for d in 0..n {
        y[d] = x[d] * periods;
    }
    let y = &y[..n];

    for m in 0..n {
        let (nm, grad_nm) = correctors.first[m].interpolate(y);
        let du = macro_solution.partial(x, &[m]);
        value += eps * nm * du;
        for i in 0..n {
            grad[i] += grad_nm[i] * du + eps * nm * macro_solution.partial(x, &[i, m]);
        }
    }
    if order == ExpansionOrder::Second {
        for k in 0..n {
            for l in 0..n {
                let (mkl, grad_mkl) = correctors.second(k, l).interpolate(y);
                let d2u = macro_solution.partial(x, &[k, l]);
                value += eps * eps * mkl * d2u;
                for i in 0..n {
                    grad[i] += eps * grad_mkl[i] * d2u
                        + eps * eps * mkl * macro_solution.partial(x, &[i, k, l]);
                }
            }
        }
    }
    (value, grad)
}

/// Error norms between the fine solution and one expansion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub field: String,
    pub order: ExpansionOrder,
    pub epsilon: Epsilon,
    /// `|e|_L2(Omega)`.
    pub l2_global: f64,
    /// Full `H1(Omega)` norm, `sqrt(|e|_L2^2 + |grad e|_L2^2)`.
    pub h1_global: f64,
    /// Max over all fine nodes of `|e|`.
    pub linf_global: f64,
    /// Max over fine element centres in the interior square of `|grad e|`.
    pub w1inf_interior: f64,
    /// Same, for `|a(x/eps) grad e|`.
    pub flux_linf_interior: f64,
}

impl ErrorReport {
    pub const NORMS: [&'static str; 5] = [
        "L2_global",
        "H1_global",
        "Linf_global",
        "W1inf_interior",
        "flux_Linf_interior",
    ];

    pub fn norm(&self, name: &str) -> Option<f64> {
        Some(match name {
            "L2_global" => self.l2_global,
            "H1_global" => self.h1_global,
            "Linf_global" => self.linf_global,
            "W1inf_interior" => self.w1inf_interior,
            "flux_Linf_interior" => self.flux_linf_interior,
            _ => return None,
        })
    }
}

fn in_interior(x: &[f64]) -> bool {
    x.iter().all(|v| *v >= INTERIOR.0 && *v <= INTERIOR.1)
}

/// Compares `fine` with the expansion of the given order.
///
/// Integral norms use the fine element Gauss rule; sup norms of values are
/// taken over fine nodes, sup norms of gradients and fluxes over fine element
/// centres (the discrete gradient is single-valued there).
pub fn error_report(
    fine: &FineSolution,
    order: ExpansionOrder,
    correctors: &CorrectorSet,
    macro_solution: &MacroSolution,
    epsilon: Epsilon,
) -> Result<ErrorReport> {
    if fine.epsilon != epsilon {
        return Err(Error::MismatchedInputs(format!(
            "fine solution has eps = {}, report requested for eps = {}",
            fine.epsilon, epsilon
        )));
    }
    if fine.field.kind() != correctors.field.kind() || fine.field.dim() != correctors.field.dim() {
        return Err(Error::MismatchedInputs(format!(
            "fine solution field `{}` differs from corrector field `{}`",
            fine.field.name, correctors.field.name
        )));
    }
    if macro_solution.dim() != fine.grid.dim() {
        return Err(Error::MismatchedInputs("macro solution dimension".into()));
    }

    let grid = &fine.grid;
    let dim = grid.dim();
    let rule = ElementRule::gauss2(grid);
    let sampler = fine.sampler();
    let expansion = |x: &[f64]| evaluate_expansion(order, correctors, macro_solution, epsilon, x);

    let per_element = crate::par::map_range(grid.num_elements(), |e| {
        let corner_values = grid.element_values(e, &fine.values);
        let mut l2 = 0.0;
        let mut semi = 0.0;
        for qp in rule.points(grid, e) {
            let (uh, guh) = qp.eval(&corner_values);
            let (u, gu) = expansion(&qp.x[..dim]);
            l2 += qp.weight * (uh - u).powi(2);
            semi += qp.weight * (0..dim).map(|d| (guh[d] - gu[d]).powi(2)).sum::<f64>();
        }
        let center = grid.element_center(e);
        let (interior_grad, interior_flux) = if in_interior(&center[..dim]) {
            let (_, guh) = rule.center_shape().combine(&corner_values);
            let (_, gu) = expansion(&center[..dim]);
            let mut diff = [0.0; MAX_DIM];
            for d in 0..dim {
                diff[d] = guh[d] - gu[d];
            }
            let flux = sampler.at(&center, &center).apply(&diff);
            (norm(&diff), norm(&flux))
        } else {
            (0.0, 0.0)
        };
        (l2, semi, interior_grad, interior_flux)
    });
    let (mut l2, mut semi, mut w1inf, mut flux) = (0.0, 0.0, 0.0_f64, 0.0_f64);
    for (a, b, c, d) in per_element {
        l2 += a;
        semi += b;
        w1inf = w1inf.max(c);
        flux = flux.max(d);
    }

    let linf = crate::par::max_range(grid.num_nodes(), |flat| {
        let node = grid.node_from_flat(flat);
        let x = grid.node_coords(&node);
        (fine.node_value(&node) - expansion(&x[..dim]).0).abs()
    });

    Ok(ErrorReport {
        field: fine.field.name.clone(),
        order,
        epsilon,
        l2_global: l2.sqrt(),
        h1_global: (l2 + semi).sqrt(),
        linf_global: linf,
        w1inf_interior: w1inf,
        flux_linf_interior: flux,
    })
}

/// Least-squares slope of `ln(error)` against `ln(eps)`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(pairs.len()));
    }
    if pairs
        .iter()
        .any(|&(e, err)| !(e > 0.0 && err > 0.0 && e.is_finite() && err.is_finite()))
    {
        return Err(Error::DegenerateData);
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|&(e, err)| (e.ln(), err.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateData);
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff_fields::preset;
    use crate::periodic_fem::build_grid;
    use crate::tensor::Tensor;

    fn macro_for(rows: &[Vec<f64>]) -> MacroSolution {
        manufactured_macro(HomogenizedTensor {
            a0: Tensor::from_rows(rows),
        })
    }

    #[test]
    fn source_examples() {
        let m = macro_for(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let x = [0.3, 0.6];
        let want = 2.0 * PI * PI * (PI * 0.3).sin() * (PI * 0.6).sin();
        assert!((m.source(&x) - want).abs() < 1e-12);

        let m = macro_for(&[vec![1.6, 0.0], vec![0.0, 2.5]]);
        let want = PI * PI * 4.1 * (PI * 0.3).sin() * (PI * 0.6).sin();
        assert!((m.source(&x) - want).abs() < 1e-12);

        let m = macro_for(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let (s1, s2, c1, c2) = (
            (PI * 0.3).sin(),
            (PI * 0.6).sin(),
            (PI * 0.3).cos(),
            (PI * 0.6).cos(),
        );
        let want = PI * PI * 3.0 * s1 * s2 - 2.0 * PI * PI * 0.5 * c1 * c2;
        assert!((m.source(&x) - want).abs() < 1e-12);
    }

    #[test]
    fn third_derivative_at_centre() {
        let m = macro_for(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(m.partial(&[0.5, 0.5], &[0, 0, 0]), 0.0);
        assert!((m.partial(&[0.5, 0.5], &[0, 0, 1]) - 0.0).abs() < 1e-30);
        let x = [0.2, 0.7];
        let want = -PI.powi(3) * (PI * 0.2).cos() * (PI * 0.7).sin();
        assert!((m.partial(&x, &[0, 0, 0]) - want).abs() < 1e-12);
    }

    #[test]
    fn macro_vanishes_on_boundary() {
        let m = macro_for(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        for t in [0.0, 0.3, 0.9] {
            assert!(m.value(&[0.0, t]).abs() < 1e-15);
            assert!(m.value(&[1.0, t]).abs() < 1e-15);
            assert!(m.value(&[t, 1.0]).abs() < 1e-15);
        }
    }

    #[test]
    fn finite_differences_agree_with_closed_forms() {
        let m = macro_for(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let x = [0.37, 0.61];
        let h = 1e-5;
        for axes in [vec![0usize, 1], vec![1, 1], vec![0, 0, 1]] {
            let (last, head) = axes.split_last().unwrap();
            let mut xp = x;
            let mut xm = x;
            xp[*last] += h;
            xm[*last] -= h;
            let fd = (m.partial(&xp, head) - m.partial(&xm, head)) / (2.0 * h);
            assert!((fd - m.partial(&x, &axes)).abs() < 1e-5, "{axes:?}");
        }
    }

    #[test]
    fn expansion_examples() {
        let field = preset("identity").unwrap();
        let grid = build_grid(2, 8).unwrap();
        let set = CorrectorSet::compute(&grid, &field, &Default::default()).unwrap();
        let m = manufactured_macro(set.a0);
        let x = [0.3, 0.45];
        for order in ExpansionOrder::ALL {
            let (v, g) = evaluate_expansion(order, &set, &m, Epsilon::reciprocal(8), &x);
            assert!((v - m.value(&x)).abs() < 1e-14);
            assert!((g[0] - m.gradient(&x)[0]).abs() < 1e-12);
        }

        let field = preset("laminate_1_4").unwrap();
        let set = CorrectorSet::compute(&grid, &field, &Default::default()).unwrap();
        let m = manufactured_macro(set.a0);
        let eps = Epsilon::reciprocal(8);
        let (v, g) = evaluate_expansion(ExpansionOrder::Zeroth, &set, &m, eps, &x);
        assert_eq!((v, g), (m.value(&x), m.gradient(&x)));

        // x / eps = (2.4, 3.6): fast variable 0.4 lies in the alpha layer.
        let (_, g) = evaluate_expansion(ExpansionOrder::First, &set, &m, eps, &x);
        let n1 = 0.6 * 0.4 - 0.15;
        let want = m.partial(&x, &[0]) * 1.6 + 0.125 * n1 * m.partial(&x, &[0, 0]);
        assert!((g[0] - want).abs() < 1e-10, "{} vs {want}", g[0]);
    }

    #[test]
    fn fit_rate_examples() {
        let e = [0.125, 0.0625, 0.03125];
        let exact: Vec<_> = e.iter().map(|&v| (v, v)).collect();
        assert!((fit_rate(&exact).unwrap() - 1.0).abs() < 1e-12);
        let half: Vec<_> = e.iter().map(|&v| (v, 3.0 * v.sqrt())).collect();
        assert!((fit_rate(&half).unwrap() - 0.5).abs() < 1e-12);
        let flat: Vec<_> = e.iter().map(|&v| (v, 3.0)).collect();
        assert!(fit_rate(&flat).unwrap().abs() < 1e-12);
        assert!(matches!(
            fit_rate(&exact[..2]),
            Err(Error::InsufficientData(2))
        ));
        let mut bad = exact.clone();
        bad[1].1 = 0.0;
        assert!(matches!(fit_rate(&bad), Err(Error::DegenerateData)));
    }

    #[test]
    fn mismatched_epsilon_is_rejected() {
        let field = preset("identity").unwrap();
        let grid = build_grid(2, 4).unwrap();
        let set = CorrectorSet::compute(&grid, &field, &Default::default()).unwrap();
        let m = manufactured_macro(set.a0);
        let fine = crate::solve_fine(
            &field,
            Epsilon::reciprocal(2),
            |x: &[f64]| m.source(x),
            8,
            &Default::default(),
        )
        .unwrap();
        let err = error_report(
            &fine,
            ExpansionOrder::First,
            &set,
            &m,
            Epsilon::reciprocal(4),
        );
        assert!(matches!(err, Err(Error::MismatchedInputs(_))));
        let lam = preset("laminate_1_4").unwrap();
        let lam_set = CorrectorSet::compute(&grid, &lam, &Default::default()).unwrap();
        let err = error_report(
            &fine,
            ExpansionOrder::First,
            &lam_set,
            &m,
            Epsilon::reciprocal(2),
        );
        assert!(matches!(err, Err(Error::MismatchedInputs(_))));
    }
}
