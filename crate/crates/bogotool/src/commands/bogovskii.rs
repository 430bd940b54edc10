use std::path::Path;

use anyhow::{bail, Result};
use bogotool_core::bogovskii::{self, BogovskiiSolution, Cube, Mollifier};
use bogotool_core::czop::Weight;
use bogotool_core::{Field, NFunctionPD, UniformGrid};
use serde_json::{json, Value};

use super::{at_least, positive, usage};
use crate::cli::{BogCommon, BogEstimatesArgs, BogSolveArgs, Bogovskii};
use crate::report::Reporter;
use crate::{io, presets};

pub fn run(cmd: &Bogovskii, rep: &mut Reporter) -> Result<()> {
    match cmd {
        Bogovskii::Solve(a) => solve(a, rep),
        Bogovskii::Estimates(a) => estimates(a, rep),
    }
}

struct Setup {
    mollifier: Mollifier,
    cube: Cube,
    grid: UniformGrid,
}

fn setup(c: &BogCommon, cells: usize) -> Result<Setup> {
    if !(1..=3).contains(&c.n) {
        usage!("--n must lie in 1..=3");
    }
    at_least("grid", cells, 4)?;
    at_least("inner-order", c.inner_order, 1)?;
    positive("cube-scale", c.cube_scale)?;
    let lam = c.cube_scale;
    Ok(Setup {
        mollifier: Mollifier::new(c.n)?,
        cube: Cube::new(&vec![0.0; c.n], lam)?,
        grid: UniformGrid::cell_centered(&vec![-0.5 * lam; c.n], lam, cells)?,
    })
}

/// A preset on the setup grid, or a field read from a file.
fn input(name: &str, s: &Setup, lam: f64) -> Result<Field> {
    if presets::bogovskii_names(s.grid.dim()).contains(&name) {
        return presets::bogovskii_field(name, &s.grid, lam);
    }
    let path = Path::new(name);
    if !path.exists() {
        usage!(
            "--f {name:?} is neither a preset {:?} nor an existing file",
            presets::bogovskii_names(s.grid.dim())
        );
    }
    let f = io::read_field(path)?;
    if f.grid().dim() != s.grid.dim() || f.ncomp() != 1 {
        bail!(
            "{name}: expected a scalar field in dimension {}",
            s.grid.dim()
        );
    }
    Ok(f)
}

fn params(c: &BogCommon, f: &str, g: &UniformGrid) -> Value {
    json!({
        "n": c.n, "grid": g.dims(), "spacing": g.spacing(), "inner_order": c.inner_order,
        "cube_scale": c.cube_scale, "project_mean": c.project_mean, "f": f,
    })
}

fn solve(a: &BogSolveArgs, rep: &mut Reporter) -> Result<()> {
    let s = setup(&a.common, a.grid)?;
    let f = input(&a.f, &s, a.common.cube_scale)?;
    let sol = bogovskii::bogovskii_apply(
        &s.mollifier,
        &f,
        &s.cube,
        a.common.inner_order,
        a.common.project_mean,
    )?;
    let r = bogovskii::divergence_residual(&sol)?;
    if let Some(path) = &a.field {
        io::write_field(path, &sol.v)?;
    }
    let ok = r.l2_abs.is_finite() && r.linf.is_finite();
    let pass = match (a.max_residual, r.l2_rel) {
        (Some(m), Some(rel)) => ok && rel <= m,
        _ => ok,
    };
    rep.push(
        "bogovskii.solve",
        "bogovskii-divergence-equation",
        params(&a.common, &a.f, f.grid()),
        json!({"residual_l2_rel": r.l2_rel, "residual_l2": r.l2_abs, "residual_linf": r.linf, "v_max": sol.v.max_abs()}),
        pass,
    );
    Ok(())
}

fn ratios(
    sol: &BogovskiiSolution,
    a: &BogEstimatesArgs,
    weight: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let h = sol.f.grid().spacing();
    let grad = bogovskii::gradient_bound_ratio(sol, a.p, weight)?;
    let dq = a
        .h_steps
        .iter()
        .map(|&k| Ok(bogovskii::diffquot_bound_ratio(sol, a.p, weight, k as f64 * h)?.max()))
        .collect::<Result<Vec<f64>>>()?;
    Ok((grad, dq))
}

fn estimates(a: &BogEstimatesArgs, rep: &mut Reporter) -> Result<()> {
    let s = setup(&a.common, a.grid)?;
    if a.p <= 1.0 || !a.p.is_finite() {
        usage!("--p must be finite and exceed 1");
    }
    if a.h_steps.is_empty() || a.h_steps.iter().any(|&k| k == 0 || 4 * k > a.grid) {
        usage!("--h-steps must be nonempty and lie in 1..={}", a.grid / 4);
    }
    let names: Vec<String> = if a.f.is_empty() {
        presets::bogovskii_names(a.common.n)
            .into_iter()
            .map(String::from)
            .collect()
    } else {
        a.f.clone()
    };
    if names.is_empty() {
        usage!(
            "no presets in dimension {}; pass --f with field files",
            a.common.n
        );
    }
    let fields = names
        .iter()
        .map(|n| input(n, &s, a.common.cube_scale))
        .collect::<Result<Vec<_>>>()?;
    let sols = bogovskii::bogovskii_apply_batch(
        &s.mollifier,
        &fields,
        &s.cube,
        a.common.inner_order,
        a.common.project_mean,
    )?;
    let omega = Weight::parse(&a.weight, a.common.n)
        .map_err(|e| anyhow::Error::new(super::Usage(e.to_string())))?;
    let w = omega.sample(sols[0].f.grid())?;
    let weight = Some(w.as_slice());
    let nf = a
        .orlicz_delta
        .map(|d| NFunctionPD::new(a.p, d))
        .transpose()?;
    for (name, sol) in names.iter().zip(&sols) {
        let (grad, dq) = ratios(sol, a, weight)?;
        let hi = dq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = dq.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = hi / lo;
        let h = sol.f.grid().spacing();
        let mut values = json!({
            "gradient_ratio": grad,
            "h": a.h_steps.iter().map(|&k| k as f64 * h).collect::<Vec<_>>(),
            "diffquot_ratio": dq,
            "diffquot_spread": spread,
        });
        if let Some(nf) = &nf {
            let o = bogovskii::orlicz_bound_ratios(sol, nf, h)?;
            values["orlicz_gradient_ratio"] = json!(o.gradient);
            values["orlicz_diffquot_ratio"] = json!(o.diffquot);
        }
        let mut p = params(&a.common, name, sol.f.grid());
        p["p"] = json!(a.p);
        p["weight"] = json!(omega.label());
        p["max_spread"] = json!(a.max_spread);
        let pass = grad.is_finite() && lo > 0.0 && spread.is_finite() && spread < a.max_spread;
        rep.push(
            "bogovskii.estimates",
            "bogovskii-gradient-bound",
            p,
            values,
            pass,
        );
    }
    Ok(())
}
