use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::coeff_fields::{preset, CoefficientField, FieldKind};
use crate::error::{Error, Result, Violation};
use crate::fine_reference::{Epsilon, MIN_RESOLUTION_FACTOR};
use crate::two_scale::ExpansionOrder;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// A field entry: either a catalog preset (optionally with parameter
/// overrides) or an explicit kind with parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawEpsilon {
    Value(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    field: Option<FieldSpec>,
    fields: Option<Vec<FieldSpec>>,
    cell_grid: Option<i64>,
    epsilons: Option<Vec<RawEpsilon>>,
    resolution_factor: Option<i64>,
    expansion_grid: Option<i64>,
    orders: Option<Vec<String>>,
    output_dir: Option<String>,
    workers: Option<usize>,
}

/// Validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub fields: Vec<CoefficientField>,
    /// Cells per side of the reported cell-problem grid.
    pub cell_grid: usize,
    /// Strictly decreasing.
    pub epsilons: Vec<Epsilon>,
    /// Fine elements per period.
    pub resolution_factor: usize,
    /// Cells per side of the corrector grid used inside the expansion;
    /// defaults to `resolution_factor` so the fine mesh and the correctors
    /// resolve one period identically.
    pub expansion_grid: usize,
    pub orders: Vec<ExpansionOrder>,
    pub output_dir: PathBuf,
    pub workers: Option<usize>,
}

fn violation(field: &str, rule: impl Into<String>) -> Violation {
    Violation {
        field: field.to_string(),
        rule: rule.into(),
    }
}

fn resolve_field(
    spec: &FieldSpec,
    label: &str,
    out: &mut Vec<Violation>,
) -> Option<CoefficientField> {
    match (&spec.preset, &spec.kind) {
        (Some(p), None) => {
            let Some(base) = preset(p) else {
                out.push(violation(label, format!("unknown preset `{p}`")));
                return None;
            };
            let name = spec.name.clone().unwrap_or_else(|| base.name.clone());
            if spec.params.is_empty() {
                let mut f = base;
                f.name = name;
                return Some(f);
            }
            let kind = match base.kind() {
                FieldKind::Constant { .. } => "constant",
                FieldKind::Laminate { .. } => "laminate",
                FieldKind::SmoothPeriodic { .. } => "smooth_periodic",
                FieldKind::CircularInclusion { .. } => "circular_inclusion",
            };
            // Overrides start from the preset's own parameters.
            let mut params = preset_params(base.kind());
            params.extend(spec.params.clone());
            match CoefficientField::from_params(name, kind, &params) {
                Ok(f) => Some(f),
                Err(e) => {
                    out.push(violation(label, e.to_string()));
                    None
                }
            }
        }
        (None, Some(k)) => {
            let name = spec.name.clone().unwrap_or_else(|| k.clone());
            match CoefficientField::from_params(name, k, &spec.params) {
                Ok(f) => Some(f),
                Err(e) => {
                    out.push(violation(label, e.to_string()));
                    None
                }
            }
        }
        _ => {
            out.push(violation(
                label,
                "exactly one of `preset` or `kind` is required",
            ));
            None
        }
    }
}

fn preset_params(kind: &FieldKind) -> BTreeMap<String, f64> {
    let pairs: Vec<(&str, f64)> = match *kind {
        FieldKind::Constant { matrix } => vec![
            ("a11", matrix.get(0, 0)),
            ("a12", matrix.get(0, 1)),
            ("a22", matrix.get(1, 1)),
        ],
        FieldKind::Laminate {
            alpha,
            beta,
            fraction,
        } => vec![("alpha", alpha), ("beta", beta), ("fraction", fraction)],
        FieldKind::SmoothPeriodic { base, amplitude } => {
            vec![("base", base), ("amplitude", amplitude)]
        }
        FieldKind::CircularInclusion {
            radius,
            inside,
            outside,
        } => vec![("radius", radius), ("inside", inside), ("outside", outside)],
    };
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn parse_epsilon(raw: &RawEpsilon) -> Option<Epsilon> {
    match raw {
        RawEpsilon::Value(v) => Epsilon::from_value(*v),
        RawEpsilon::Text(s) => {
            let s = s.trim();
            if let Some(den) = s.strip_prefix("1/") {
                den.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|d| *d > 0)
                    .map(Epsilon::reciprocal)
            } else {
                s.parse::<f64>().ok().and_then(Epsilon::from_value)
            }
        }
    }
}

/// `value * t` is an integer for every interface position `t`.
fn aligned(field: &CoefficientField, cells: usize) -> bool {
    let mut ok = field.axis_interfaces().iter().all(|t| {
        let s = t * cells as f64;
        (s - s.round()).abs() < 1e-9
    });
    if matches!(field.kind(), FieldKind::CircularInclusion { .. }) {
        ok &= cells.is_multiple_of(2);
    }
    ok
}

/// Parses and checks a JSON config, reporting every violated rule at once.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = serde_json::from_str(raw)
        .map_err(|e| Error::Config(vec![violation("config", e.to_string())]))?;
    let mut v = Vec::new();

    match raw.schema_version {
        Some(CONFIG_SCHEMA_VERSION) => {}
        Some(other) => v.push(violation(
            "schema_version",
            format!("unsupported schema_version {other} (expected {CONFIG_SCHEMA_VERSION})"),
        )),
        None => v.push(violation("schema_version", "schema_version is required")),
    }

    let specs: Vec<FieldSpec> = match (raw.field, raw.fields) {
        (Some(f), None) => vec![f],
        (None, Some(fs)) if !fs.is_empty() => fs,
        (None, Some(_)) => {
            v.push(violation("fields", "at least one field is required"));
            Vec::new()
        }
        (Some(_), Some(_)) => {
            v.push(violation(
                "fields",
                "give either `field` or `fields`, not both",
            ));
            Vec::new()
        }
        (None, None) => {
            v.push(violation(
                "fields",
                "a `field` or `fields` entry is required",
            ));
            Vec::new()
        }
    };
    let fields: Vec<CoefficientField> = specs
        .iter()
        .enumerate()
        .filter_map(|(i, s)| resolve_field(s, &format!("fields[{i}]"), &mut v))
        .collect();
    let mut names = BTreeSet::new();
    for f in &fields {
        if !names.insert(f.name.clone()) {
            v.push(violation(
                "fields",
                format!("duplicate field name `{}`", f.name),
            ));
        }
        if f.name.is_empty() || f.name.contains(['/', '\\', ',']) {
            v.push(violation(
                "fields",
                format!(
                    "field name `{}` must be non-empty without `/`, `\\` or `,`",
                    f.name
                ),
            ));
        }
    }

    let cell_grid = match raw.cell_grid {
        Some(n) if n >= 2 => n as usize,
        Some(_) => {
            v.push(violation("cell_grid", "cell_grid ≥ 2"));
            0
        }
        None => {
            v.push(violation("cell_grid", "cell_grid is required"));
            0
        }
    };

    let resolution_factor = match raw.resolution_factor {
        Some(n) if n >= MIN_RESOLUTION_FACTOR as i64 => n as usize,
        Some(_) => {
            v.push(violation("resolution_factor", "resolution_factor ≥ 8"));
            0
        }
        None => {
            v.push(violation(
                "resolution_factor",
                "resolution_factor is required",
            ));
            0
        }
    };

    let expansion_grid = match raw.expansion_grid {
        None => resolution_factor,
        Some(n) if n >= 2 => n as usize,
        Some(_) => {
            v.push(violation("expansion_grid", "expansion_grid ≥ 2"));
            0
        }
    };

    for f in &fields {
        for (label, cells) in [
            ("cell_grid", cell_grid),
            ("resolution_factor", resolution_factor),
            ("expansion_grid", expansion_grid),
        ] {
            if cells >= 2 && !aligned(f, cells) {
                v.push(violation(
                    label,
                    format!(
                        "{label} = {cells} does not place the interfaces of `{}` on element edges",
                        f.name
                    ),
                ));
            }
        }
    }

    let mut epsilons = Vec::new();
    match raw.epsilons {
        Some(list) if !list.is_empty() => {
            for (i, e) in list.iter().enumerate() {
                match parse_epsilon(e) {
                    Some(eps) => epsilons.push(eps),
                    None => v.push(violation(
                        &format!("epsilons[{i}]"),
                        "epsilon must be reciprocal of an integer",
                    )),
                }
            }
            if epsilons
                .windows(2)
                .any(|w| w[1].periods() <= w[0].periods())
            {
                v.push(violation(
                    "epsilons",
                    "epsilons must be strictly decreasing",
                ));
            }
        }
        _ => v.push(violation("epsilons", "at least one epsilon is required")),
    }

    let mut orders = Vec::new();
    match raw.orders {
        None => orders.extend(ExpansionOrder::ALL),
        Some(list) if list.is_empty() => {
            v.push(violation("orders", "at least one order is required"))
        }
        Some(list) => {
            for (i, o) in list.iter().enumerate() {
                let parsed = ExpansionOrder::ALL
                    .into_iter()
                    .find(|x| x.as_str().eq_ignore_ascii_case(o));
                match parsed {
                    Some(p) if !orders.contains(&p) => orders.push(p),
                    Some(_) => v.push(violation(&format!("orders[{i}]"), "duplicate order")),
                    None => v.push(violation(
                        &format!("orders[{i}]"),
                        "order must be one of Zeroth, First, Second",
                    )),
                }
            }
            orders.sort();
        }
    }

    let output_dir = match raw.output_dir {
        Some(d) if !d.trim().is_empty() => PathBuf::from(d),
        Some(_) => {
            v.push(violation("output_dir", "output_dir must be non-empty"));
            PathBuf::new()
        }
        None => PathBuf::from("homogenize-out"),
    };

    if raw.workers == Some(0) {
        v.push(violation("workers", "workers ≥ 1"));
    }

    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    Ok(ExperimentConfig {
        fields,
        cell_grid,
        epsilons,
        resolution_factor,
        expansion_grid,
        orders,
        output_dir,
        workers: raw.workers,
    })
}
