use std::path::Path;

use anyhow::{Context, Result};
use bogotool_core::bogovskii::Cube;
use bogotool_core::pstokes::{self, CutoffSpec, PStokesProblem, PStokesSolution};
use bogotool_core::{Field, Rank, StressModel};
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{at_least, positive, rng, usage};
use crate::cli::{PsCommon, PsRegularityArgs, PsSolveArgs, Pstokes};
use crate::io;
use crate::report::Reporter;

pub fn run(cmd: &Pstokes, seed: u64, rep: &mut Reporter) -> Result<()> {
    match cmd {
        Pstokes::Solve(a) => solve(a, seed, rep),
        Pstokes::Regularity(a) => regularity(a, seed, rep),
    }
}

fn validate(c: &PsCommon) -> Result<()> {
    if !(c.p > 1.0 && c.p <= 2.0) {
        usage!("--p must lie in (1, 2], got {}", c.p);
    }
    if !(c.delta >= 0.0 && c.delta.is_finite()) || (c.delta == 0.0 && c.p < 2.0) {
        usage!(
            "--delta must be positive (or zero with --p 2), got {}",
            c.delta
        );
    }
    if c.f != "vortex" {
        usage!("unknown forcing preset {:?}; known: [\"vortex\"]", c.f);
    }
    positive("side", c.side)?;
    positive("tol", c.tol)?;
    if !c.amplitude.is_finite() {
        usage!("--amplitude must be finite");
    }
    at_least("max-iters", c.max_iters, 1)
}

/// Problem with a model calibrated from `seed`.
fn problem(c: &PsCommon, cells: usize, seed: u64) -> Result<PStokesProblem> {
    let mut model = StressModel::power_law(c.p, c.delta)?;
    model.calibrate(&mut rng(seed), 2, 2000, 1.0);
    let f = pstokes::vortex_forcing(c.side, cells, c.amplitude)?;
    Ok(PStokesProblem::new(model, f)?)
}

fn base_params(c: &PsCommon, seed: u64) -> Value {
    json!({"p": c.p, "delta": c.delta, "f": c.f, "amplitude": c.amplitude, "side": c.side, "tol": c.tol, "max_iters": c.max_iters, "seed": seed})
}

fn solution_values(s: &PStokesSolution) -> Value {
    json!({
        "converged": s.converged,
        "iterations": s.iterations,
        "grad_norm": s.grad_norm,
        "energy": s.energy_history.last(),
        "energy_nonincreasing": s.energy_history.windows(2).all(|w| w[1] <= w[0]),
        "max_abs_du": s.du.max_abs(),
    })
}

fn solve(a: &PsSolveArgs, seed: u64, rep: &mut Reporter) -> Result<()> {
    validate(&a.common)?;
    at_least("grid", a.grid, 8)?;
    let pr = problem(&a.common, a.grid, seed)?;
    let s = pstokes::solve(&pr, a.common.tol, a.common.max_iters)?;
    let div = pstokes::interior_divergence(&s, 1)?;
    let weak = if a.weak_tests > 0 {
        Some(pstokes::weak_residual(
            &s,
            &pr,
            a.weak_tests,
            &mut rng(seed),
        )?)
    } else {
        None
    };
    let apriori = pstokes::apriori_ratio(&s, &pr)?;
    if let Some(path) = &a.field {
        io::write_field(path, &s.u)?;
    }
    let mut values = solution_values(&s);
    values["interior_divergence"] = json!(div);
    values["weak_residual"] = json!(weak);
    values["apriori_ratio"] = json!(apriori);
    let mut params = base_params(&a.common, seed);
    params["grid"] = json!(a.grid);
    params["weak_tests"] = json!(a.weak_tests);
    let monotone = values["energy_nonincreasing"].as_bool() == Some(true);
    rep.push(
        "pstokes.solve",
        "p-stokes-weak-solution",
        params,
        values,
        s.converged && monotone && div <= 1e-10 && weak.is_none_or(|w| w <= 10.0 * a.common.tol),
    );
    Ok(())
}

struct Row {
    cells: usize,
    lhs: f64,
    rhs: f64,
    ratio: f64,
    apriori: f64,
    solution: Value,
}

fn regularity(a: &PsRegularityArgs, seed: u64, rep: &mut Reporter) -> Result<()> {
    let c = &a.common;
    validate(c)?;
    if a.grid_list.is_empty() {
        usage!("--grid-list must not be empty");
    }
    for &n in &a.grid_list {
        at_least("grid-list", n, 8)?;
    }
    let q = Cube::new(&[0.5 * c.side, 0.5 * c.side], 0.5 * c.side)?;
    let rows: Vec<Result<Row>> = a
        .grid_list
        .par_iter()
        .map(|&n| {
            let pr = problem(c, n, seed)?;
            let s = pstokes::solve(&pr, c.tol, c.max_iters)?;
            let cut = CutoffSpec {
                cube: q.clone(),
                xi: Field::zeros(pr.grid().clone(), Rank::Scalar),
                norm1: 0.0,
                norm2: 0.0,
            };
            let r = pstokes::interior_regularity_check(&s, &pr, &cut, &[])?;
            Ok(Row {
                cells: n,
                lhs: r.lhs,
                rhs: r.rhs,
                ratio: r.ratio,
                apriori: pstokes::apriori_ratio(&s, &pr)?,
                solution: solution_values(&s),
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(path) = &a.table {
        write_table(path, &rows)?;
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let spread = spread(&ratios);
    let mut params = base_params(c, seed);
    params["grid_list"] = json!(a.grid_list);
    params["cube"] = json!({"center": q.center(), "side": q.side()});
    params["max_spread"] = json!(a.max_spread);
    let all_converged = rows.iter().all(|r| r.solution["converged"] == json!(true));
    rep.push(
        "pstokes.regularity",
        "interior-regularity-estimate",
        params,
        json!({
            "rows": rows.iter().map(|r| json!({
                "grid": r.cells, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio, "apriori_ratio": r.apriori, "solve": r.solution,
            })).collect::<Vec<_>>(),
            "ratio_spread": spread,
        }),
        all_converged && ratios.iter().all(|v| v.is_finite() && *v > 0.0) && spread < a.max_spread,
    );

    if a.tang_grid == 0 {
        return Ok(());
    }
    at_least("tang-grid", a.tang_grid, 8)?;
    if a.h_steps.is_empty() || a.h_steps.contains(&0) {
        usage!("--h-steps must be positive");
    }
    let pr = problem(c, a.tang_grid, seed)?;
    let s = pstokes::solve(&pr, c.tol, c.max_iters)?;
    let cut = pstokes::make_cutoff(&q, pr.grid(), 8, 4)
        .context("cutoff on the difference-quotient grid")?;
    let hg = pr.grid().spacing();
    let hs: Vec<f64> = a.h_steps.iter().map(|&k| k as f64 * hg).collect();
    let r = pstokes::interior_regularity_check(&s, &pr, &cut, &hs)?;
    let mut params = base_params(c, seed);
    params["grid"] = json!(a.tang_grid);
    params["h"] = json!(hs);
    params["max_spread"] = json!(a.max_spread);
    rep.push(
        "pstokes.regularity",
        "difference-quotient-regularity",
        params,
        json!({
            "entries": r.tang.iter().map(|e| json!({"k": e.k, "h": e.h, "f_quotient": e.f_quotient, "phi_quotient": e.phi_quotient})).collect::<Vec<_>>(),
            "spread": r.tang_spread,
            "cutoff_norm1": r.cutoff_norm1,
            "cutoff_norm2": r.cutoff_norm2,
            "solve": solution_values(&s),
        }),
        s.converged && r.tang_spread.is_finite() && r.tang_spread < a.max_spread,
    );
    Ok(())
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn write_table(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record([
        "grid",
        "lhs",
        "rhs",
        "ratio",
        "apriori_ratio",
        "iterations",
        "grad_norm",
    ])?;
    for r in rows {
        w.write_record([
            r.cells.to_string(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.ratio.to_string(),
            r.apriori.to_string(),
            r.solution["iterations"].to_string(),
            r.solution["grad_norm"].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
