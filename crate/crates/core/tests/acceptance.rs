//! Acceptance criteria. Prints one line per criterion and exits non-zero if
//! any of them fails.

#![allow(clippy::needless_range_loop)]

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use homogenize::correctors::{energy_tensor, CorrectorNorms};
use homogenize::harness::{run, validate_config, write_outputs, ExperimentConfig, RunSummary};
use homogenize::{
    build_grid, catalog_presets, preset, CoefficientField, CorrectorSet, ExpansionOrder,
};

const CONSTANT_TOL: f64 = 1e-10;
const LAMINATE_A0_TOL: f64 = 1e-8;
const LAMINATE_SLOPE_TOL: f64 = 1e-6;
const ENERGY_TOL: f64 = 1e-8;
const COMPAT_PIECEWISE_TOL: f64 = 1e-8;
const COMPAT_SMOOTH_TOL: f64 = 1e-6;
/// Residuals at this size are roundoff; "decreasing" is only asked of
/// residuals above it.
const COMPAT_ROUNDOFF: f64 = 1e-10;
const INTERIOR_BAND: (f64, f64) = (0.7, 1.3);
const H1_BAND: (f64, f64) = (0.35, 0.75);
const LINF_BAND: (f64, f64) = (0.7, 1.3);
const SWEEP_BUDGET: Duration = Duration::from_secs(300);
const BOUNDED_SMOOTH: f64 = 0.05;
const BOUNDED_PIECEWISE: f64 = 0.15;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn cell_set(field: &CoefficientField, cells: usize) -> CorrectorSet {
    CorrectorSet::compute(
        &build_grid(field.dim(), cells).unwrap(),
        field,
        &Default::default(),
    )
    .unwrap_or_else(|e| panic!("{} at {cells}: {e}", field.name))
}

fn in_band(x: f64, band: (f64, f64)) -> bool {
    x >= band.0 && x <= band.1
}

fn constant_exactness() -> Outcome {
    let mut worst_corrector = 0.0_f64;
    let mut worst_a0 = 0.0_f64;
    for name in ["identity", "anisotropic_constant"] {
        let field = preset(name).unwrap();
        let set = cell_set(&field, 64);
        for f in set.first.iter().chain(set.second.iter()) {
            worst_corrector = worst_corrector.max(f.sup_nodes());
        }
        let homogenize::FieldKind::Constant { matrix } = field.kind() else {
            unreachable!()
        };
        worst_a0 = worst_a0.max(set.a0.a0.max_abs_diff(matrix));
    }
    outcome(
        worst_corrector <= CONSTANT_TOL && worst_a0 <= CONSTANT_TOL,
        format!("sup |N|,|M| = {worst_corrector:.1e}, |a0 - A| = {worst_a0:.1e}"),
    )
}

fn laminate_oracle() -> Outcome {
    let field = preset("laminate_1_4").unwrap();
    let cells = 64;
    let set = cell_set(&field, cells);
    let a0_err = (set.a0.get(0, 0) - 1.6)
        .abs()
        .max((set.a0.get(1, 1) - 2.5).abs())
        .max(set.a0.get(0, 1).abs())
        .max(set.a0.get(1, 0).abs());

    let h = 1.0 / cells as f64;
    let a: Vec<f64> = (0..cells)
        .map(|i| field.scalar_at(&[(i as f64 + 0.5) * h, 0.5]).unwrap())
        .collect();
    let oracle = common::slopes(&common::first_corrector(&a));
    let mut slope_err = 0.0_f64;
    let mut layer_err = 0.0_f64;
    for i in 0..cells {
        for j in 0..cells {
            let y = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
            let (_, g) = set.first[0].interpolate(&y);
            slope_err = slope_err.max((g[0] - oracle[i]).abs());
            let layer = if y[0] < 0.5 { 0.6 } else { -0.6 };
            layer_err = layer_err.max((g[0] - layer).abs());
        }
    }
    outcome(
        a0_err <= LAMINATE_A0_TOL && slope_err <= LAMINATE_SLOPE_TOL && layer_err <= LAMINATE_SLOPE_TOL,
        format!(
            "|a0 - diag(1.6, 2.5)| = {a0_err:.1e}, |dN1 - fd| = {slope_err:.1e}, |dN1 - (+-0.6)| = {layer_err:.1e}"
        ),
    )
}

fn energy_identity() -> Outcome {
    let mut worst = (0.0_f64, String::new());
    for field in catalog_presets() {
        let set = cell_set(&field, 64);
        let energy = energy_tensor(&set.grid, &field, &set.first);
        let d = set.a0.a0.max_abs_diff(&energy);
        if d >= worst.0 {
            worst = (d, field.name.clone());
        }
    }
    outcome(
        worst.0 <= ENERGY_TOL,
        format!("max entry-wise difference {:.1e} ({})", worst.0, worst.1),
    )
}

fn compatibility() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for field in catalog_presets() {
        if field.is_constant() {
            continue;
        }
        let tol = if field.is_piecewise_constant() {
            COMPAT_PIECEWISE_TOL
        } else {
            COMPAT_SMOOTH_TOL
        };
        let r64 = cell_set(&field, 64)
            .compatibility
            .iter()
            .copied()
            .fold(0.0, f64::max);
        let r128 = cell_set(&field, 128)
            .compatibility
            .iter()
            .copied()
            .fold(0.0, f64::max);
        pass &= r64 <= tol && r128 <= r64.max(COMPAT_ROUNDOFF);
        parts.push(format!("{} {r64:.1e} -> {r128:.1e}", field.name));
    }
    outcome(pass, parts.join(", "))
}

struct Sweep {
    summary: RunSummary,
    elapsed: Duration,
    dir: tempfile::TempDir,
}

fn default_config(out: &Path, workers: Option<usize>) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut cfg = validate_config(&text).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg.workers = workers;
    cfg
}

fn sweep(workers: Option<usize>) -> Sweep {
    let dir = tempfile::tempdir().unwrap();
    let cfg = default_config(dir.path(), workers);
    let start = Instant::now();
    let summary = run(&cfg);
    let elapsed = start.elapsed();
    write_outputs(&summary, dir.path()).unwrap();
    Sweep {
        summary,
        elapsed,
        dir,
    }
}

fn rate(summary: &RunSummary, field: &str, order: ExpansionOrder, norm: &str) -> Option<f64> {
    summary
        .fields
        .iter()
        .find(|f| f.field.name == field)?
        .fitted_rates
        .iter()
        .find(|r| r.order == order && r.norm == norm)?
        .rate
}

fn rate_criterion(sweep: &Sweep, order: ExpansionOrder, norm: &str, band: (f64, f64)) -> Outcome {
    let mut pass = sweep.summary.fields.iter().all(|f| f.failures.is_empty());
    let mut parts = Vec::new();
    for f in &sweep.summary.fields {
        let r = rate(&sweep.summary, &f.field.name, order, norm);
        pass &= r.is_some_and(|r| in_band(r, band));
        parts.push(format!(
            "{} {}",
            f.field.name,
            r.map_or("none".into(), |r| format!("{r:.3}"))
        ));
    }
    outcome(
        pass,
        format!(
            "{order} {norm} slope: {} (band [{}, {}])",
            parts.join(", "),
            band.0,
            band.1
        ),
    )
}

fn interior_gradient(sweep: &Sweep) -> Outcome {
    let mut o = rate_criterion(
        sweep,
        ExpansionOrder::First,
        "W1inf_interior",
        INTERIOR_BAND,
    );
    o.pass &= sweep.elapsed <= SWEEP_BUDGET;
    o.detail += &format!(", sweep {:.1}s", sweep.elapsed.as_secs_f64());
    o
}

fn global_h1(sweep: &Sweep) -> Outcome {
    let s = &sweep.summary;
    let h1 = rate(s, "smooth_periodic", ExpansionOrder::First, "H1_global");
    let interior = rate(
        s,
        "smooth_periodic",
        ExpansionOrder::First,
        "W1inf_interior",
    );
    let laminate = rate(s, "laminate_1_4", ExpansionOrder::First, "H1_global");
    let pass = match (h1, interior) {
        (Some(h1), Some(w)) => in_band(h1, H1_BAND) && w - h1 >= 0.25,
        _ => false,
    };
    let fmt = |r: Option<f64>| r.map_or("none".into(), |r| format!("{r:.3}"));
    outcome(
        pass,
        format!(
            "smooth_periodic H1 {} vs interior W1inf {} (band [{}, {}]); laminate_1_4 H1 {} (no boundary layer, informational)",
            fmt(h1),
            fmt(interior),
            H1_BAND.0,
            H1_BAND.1,
            fmt(laminate)
        ),
    )
}

fn relative_change(a: &CorrectorNorms, b: &CorrectorNorms) -> f64 {
    let pairs = [
        (&a.first_value, &b.first_value),
        (&a.first_grad, &b.first_grad),
        (&a.second_value, &b.second_value),
        (&a.second_grad, &b.second_grad),
    ];
    let mut worst = 0.0_f64;
    for (x, y) in pairs {
        for (u, v) in x.iter().zip(y) {
            let scale = u.abs().max(v.abs());
            if scale > 1e-8 {
                worst = worst.max((u - v).abs() / scale);
            }
        }
    }
    worst
}

fn bounded_correctors() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for field in catalog_presets() {
        if field.is_constant() {
            continue;
        }
        let tol = if field.is_piecewise_constant() {
            BOUNDED_PIECEWISE
        } else {
            BOUNDED_SMOOTH
        };
        let change = relative_change(
            &cell_set(&field, 64).norms(),
            &cell_set(&field, 128).norms(),
        );
        pass &= change < tol;
        parts.push(format!(
            "{} {:.1}% (< {}%)",
            field.name,
            100.0 * change,
            100.0 * tol
        ));
    }
    outcome(
        pass,
        format!("sup-norm change 64 -> 128: {}", parts.join(", ")),
    )
}

fn determinism(first: &Sweep) -> Outcome {
    let again = sweep(None);
    let serial = sweep(Some(1));
    let read = |s: &Sweep| std::fs::read(s.dir.path().join("errors.csv")).unwrap();
    let reference = read(first);
    let same = read(&again) == reference && read(&serial) == reference;
    outcome(
        same,
        format!(
            "errors.csv identical across 3 runs ({} bytes, one single-threaded)",
            reference.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: u32, title: &str, o: Outcome| {
        println!(
            "criterion {id:>2} {} {title}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "constant-coefficient exactness", constant_exactness());
    report(2, "laminate tensor oracle", laminate_oracle());
    report(3, "energy-form identity", energy_identity());
    report(4, "compatibility", compatibility());
    let s = sweep(None);
    report(5, "interior W1inf rate", interior_gradient(&s));
    report(
        6,
        "interior flux rate",
        rate_criterion(
            &s,
            ExpansionOrder::First,
            "flux_Linf_interior",
            INTERIOR_BAND,
        ),
    );
    report(7, "global H1 rate", global_h1(&s));
    report(
        8,
        "Linf rate",
        rate_criterion(&s, ExpansionOrder::Zeroth, "Linf_global", LINF_BAND),
    );
    report(9, "corrector boundedness", bounded_correctors());
    report(10, "determinism", determinism(&s));
    if failed == 0 {
        println!("acceptance: all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 10 criteria fail");
        ExitCode::FAILURE
    }
}
