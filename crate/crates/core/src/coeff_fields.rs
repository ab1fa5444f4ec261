//! Catalog of 1-periodic, symmetric, uniformly elliptic coefficient fields.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tensor, MAX_DIM};

/// Closed-form description of `a(y)` on the unit cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    /// `a(y) = A` everywhere.
    Constant { matrix: Tensor },
    /// Layers normal to `y_1`: `alpha * I` for `y_1 mod 1 < fraction`, `beta * I` otherwise.
    Laminate {
        alpha: f64,
        beta: f64,
        fraction: f64,
    },
    /// `(base + amplitude * prod_d sin(2 pi y_d)) * I`.
    SmoothPeriodic { base: f64, amplitude: f64 },
    /// Ball of `radius` centred in the cell with conductivity `inside`, `outside` elsewhere.
    CircularInclusion {
        radius: f64,
        inside: f64,
        outside: f64,
    },
}

/// A named periodic coefficient field with declared ellipticity bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub name: String,
    dim: usize,
    kind: FieldKind,
    lambda: f64,
    big_lambda: f64,
}

impl CoefficientField {
    pub fn new(name: impl Into<String>, dim: usize, kind: FieldKind) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        let (lambda, big_lambda) = match &kind {
            FieldKind::Constant { matrix } => {
                if matrix.dim() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "constant matrix is {}x{}, field dimension is {dim}",
                        matrix.dim(),
                        matrix.dim()
                    )));
                }
                if matrix.max_asymmetry() > 0.0 {
                    return Err(Error::InvalidField(
                        "constant matrix is not symmetric".into(),
                    ));
                }
                let ev = matrix.sym_eigenvalues();
                (ev[0], ev[dim - 1])
            }
            FieldKind::Laminate {
                alpha,
                beta,
                fraction,
            } => {
                if !(*fraction > 0.0 && *fraction < 1.0) {
                    return Err(Error::InvalidField(format!(
                        "laminate fraction {fraction} must lie in (0, 1)"
                    )));
                }
                (alpha.min(*beta), alpha.max(*beta))
            }
            FieldKind::SmoothPeriodic { base, amplitude } => {
                (base - amplitude.abs(), base + amplitude.abs())
            }
            FieldKind::CircularInclusion {
                radius,
                inside,
                outside,
            } => {
                if !(*radius > 0.0 && *radius < 0.5) {
                    return Err(Error::InvalidField(format!(
                        "inclusion radius {radius} must lie in (0, 0.5)"
                    )));
                }
                (inside.min(*outside), inside.max(*outside))
            }
        };
        if !(lambda > 0.0 && big_lambda.is_finite()) {
            return Err(Error::InvalidField(format!(
                "field is not uniformly elliptic (lower bound {lambda})"
            )));
        }
        Ok(CoefficientField {
            name: name.into(),
            dim,
            kind,
            lambda,
            big_lambda,
        })
    }

    /// Builds a field from a kind name and a parameter map, as found in config files.
    ///
    /// Missing parameters take the preset defaults for that kind.
    pub fn from_params(
        name: impl Into<String>,
        kind: &str,
        params: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
        let known: &[&str] = match kind {
            "constant" => &["a11", "a12", "a22"],
            "laminate" => &["alpha", "beta", "fraction"],
            "smooth_periodic" => &["base", "amplitude"],
            "circular_inclusion" => &["radius", "inside", "outside"],
            other => return Err(Error::InvalidField(format!("unknown field kind `{other}`"))),
        };
        if let Some(bad) = params.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::InvalidField(format!(
                "unknown parameter `{bad}` for kind `{kind}` (expected one of {known:?})"
            )));
        }
        let kind = match kind {
            "constant" => {
                let a12 = get("a12", 0.0);
                FieldKind::Constant {
                    matrix: Tensor::from_rows(&[
                        vec![get("a11", 1.0), a12],
                        vec![a12, get("a22", 1.0)],
                    ]),
                }
            }
            "laminate" => FieldKind::Laminate {
                alpha: get("alpha", 1.0),
                beta: get("beta", 4.0),
                fraction: get("fraction", 0.5),
            },
            "smooth_periodic" => FieldKind::SmoothPeriodic {
                base: get("base", 2.0),
                amplitude: get("amplitude", 1.0),
            },
            _ => FieldKind::CircularInclusion {
                radius: get("radius", 0.25),
                inside: get("inside", 10.0),
                outside: get("outside", 1.0),
            },
        };
        CoefficientField::new(name, 2, kind)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    /// Declared `(lambda, Lambda)` with `lambda |xi|^2 <= xi^T a xi <= Lambda |xi|^2`.
    pub fn ellipticity_bounds(&self) -> (f64, f64) {
        (self.lambda, self.big_lambda)
    }

    /// Fields with jumps are sampled once per element (at its centre) by the assembler.
    pub fn is_piecewise_constant(&self) -> bool {
        matches!(
            self.kind,
            FieldKind::Laminate { .. } | FieldKind::CircularInclusion { .. }
        )
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, FieldKind::Constant { .. })
    }

    /// Positions `t` in `[0, 1)` of material interfaces along each axis, for
    /// fields whose jumps are axis-aligned. Used to check grid alignment.
    pub fn axis_interfaces(&self) -> Vec<f64> {
        match self.kind {
            FieldKind::Laminate { fraction, .. } => vec![0.0, fraction],
            _ => Vec::new(),
        }
    }

    /// Evaluates `a(y mod 1)`.
    pub fn sample(&self, y: &[f64]) -> Tensor {
        debug_assert_eq!(y.len(), self.dim);
        debug_assert!(y.iter().all(|v| v.is_finite()), "non-finite sample point");
        match &self.kind {
            FieldKind::Constant { matrix } => *matrix,
            FieldKind::Laminate {
                alpha,
                beta,
                fraction,
            } => {
                let t = y[0].rem_euclid(1.0);
                Tensor::scaled_identity(self.dim, if t < *fraction { *alpha } else { *beta })
            }
            FieldKind::SmoothPeriodic { base, amplitude } => {
                // sin(2 pi y) is evaluated on the wrapped coordinate so that
                // integer shifts give bit-identical values.
                let prod: f64 = y
                    .iter()
                    .map(|v| (2.0 * PI * v.rem_euclid(1.0)).sin())
                    .product();
                Tensor::scaled_identity(self.dim, base + amplitude * prod)
            }
            FieldKind::CircularInclusion {
                radius,
                inside,
                outside,
            } => {
                let r2: f64 = y
                    .iter()
                    .map(|v| {
                        let d = v.rem_euclid(1.0) - 0.5;
                        d * d
                    })
                    .sum();
                Tensor::scaled_identity(
                    self.dim,
                    if r2 < radius * radius {
                        *inside
                    } else {
                        *outside
                    },
                )
            }
        }
    }

    /// Scalar conductivity for isotropic fields, `None` for a general constant matrix.
    pub fn scalar_at(&self, y: &[f64]) -> Option<f64> {
        match self.kind {
            FieldKind::Constant { matrix } => {
                let c = matrix.get(0, 0);
                (matrix.max_abs_diff(&Tensor::scaled_identity(self.dim, c)) == 0.0).then_some(c)
            }
            _ => Some(self.sample(y).get(0, 0)),
        }
    }
}

/// Looks up a catalog preset by name.
pub fn preset(name: &str) -> Option<CoefficientField> {
    catalog_presets().into_iter().find(|f| f.name == name)
}

/// The shipped 2D presets.
pub fn catalog_presets() -> Vec<CoefficientField> {
    let build = |name: &str, kind| CoefficientField::new(name, 2, kind).expect("valid preset");
    vec![
        build(
            "identity",
            FieldKind::Constant {
                matrix: Tensor::identity(2),
            },
        ),
        build(
            "anisotropic_constant",
            FieldKind::Constant {
                matrix: Tensor::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]),
            },
        ),
        build(
            "laminate_1_4",
            FieldKind::Laminate {
                alpha: 1.0,
                beta: 4.0,
                fraction: 0.5,
            },
        ),
        build(
            "smooth_periodic",
            FieldKind::SmoothPeriodic {
                base: 2.0,
                amplitude: 1.0,
            },
        ),
        build(
            "inclusion_r025_c10",
            FieldKind::CircularInclusion {
                radius: 0.25,
                inside: 10.0,
                outside: 1.0,
            },
        ),
    ]
}
