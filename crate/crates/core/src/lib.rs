//! Periodic homogenization of scalar elliptic problems with oscillating
//! coefficients `-div(a(x/eps) grad u) = f`.
//!
//! The crate solves the first and second cell problems on a structured
//! multilinear finite element grid, forms the homogenized tensor, evaluates
//! the two-scale expansion `u0 + eps*u1 + eps^2*u2` and measures it against a
//! resolved fine-scale solve.
//!
//! Data-parallel loops (element assembly, sparse products, independent cell
//! problems and epsilon sweeps) run on rayon when the `parallel` feature is
//! enabled (the default) and fall back to plain iterators otherwise. Both
//! paths produce bit-identical results.

#![allow(clippy::needless_range_loop)]

pub mod coeff_fields;
pub mod correctors;
pub mod error;
pub mod fine_reference;
pub mod harness;
pub mod par;
pub mod periodic_fem;
pub mod tensor;
pub mod two_scale;

pub use coeff_fields::{catalog_presets, preset, CoefficientField, FieldKind};
pub use correctors::{CorrectorSet, HomogenizedTensor};
pub use error::{Error, Result};
pub use fine_reference::{solve_fine, Epsilon, FineSolution};
pub use periodic_fem::{build_grid, Grid, PeriodicField, SolverOptions};
pub use tensor::{Tensor, MAX_DIM};
pub use two_scale::{error_report, fit_rate, ErrorReport, ExpansionOrder, MacroSolution};
