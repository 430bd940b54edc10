use anyhow::Result;
use bogotool_core::grid::{self, Field, Rank, Sign, UniformGrid};
use bogotool_core::tensor::{self, StressModel, SymTensor, HAMMER_PAIR_LABELS};
use bogotool_core::{nfunc, NFunction};
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{at_least, nfunction, positive, rng, usage};
use crate::cli::{DiffquotArgs, Eq2Args, HammerArgs, Verify, YoungArgs};
use crate::presets;
use crate::report::Reporter;

pub fn run(cmd: &Verify, seed: u64, rep: &mut Reporter) -> Result<()> {
    match cmd {
        Verify::Young(a) => young(a, seed, rep),
        Verify::Hammer(a) => hammer(a, seed, rep),
        Verify::Eq2(a) => eq2(a, rep),
        Verify::Diffquot(a) => diffquot(a, rep),
    }
}

fn young(a: &YoungArgs, seed: u64, rep: &mut Reporter) -> Result<()> {
    let nf = nfunction(&a.nf)?;
    positive("lo", a.lo)?;
    positive("hi", a.hi)?;
    if a.lo >= a.hi {
        usage!("--lo must be below --hi");
    }
    at_least("samples", a.samples, 1)?;
    let mut rng = rng(seed);
    for &eps in &a.eps {
        positive("eps", eps)?;
        let sample = nfunc::log_uniform_pairs(&mut rng, a.samples, a.lo, a.hi);
        let r = nfunc::young_check(&nf, eps, &sample)?;
        rep.push(
            "verify.young",
            "young-inequality",
            json!({"p": a.nf.p, "delta": a.nf.delta, "eps": eps, "samples": a.samples, "lo": a.lo, "hi": a.hi, "seed": seed}),
            json!({
                "c_eps_conjugate": r.c_eps_conjugate,
                "c_eps_derivative": r.c_eps_derivative,
                "violations_conjugate": r.violations_conjugate,
                "violations_derivative": r.violations_derivative,
            }),
            r.pass(),
        );
    }
    Ok(())
}

fn range_json(r: &tensor::RatioRange) -> Value {
    json!({"min": r.min, "max": r.max, "count": r.count})
}

fn hammer(a: &HammerArgs, seed: u64, rep: &mut Reporter) -> Result<()> {
    nfunction(&a.nf)?;
    at_least("samples", a.samples, 1)?;
    let model = StressModel::power_law(a.nf.p, a.nf.delta)?;
    let n = a.dim as usize;
    let mut rng = rng(seed);
    let stats = tensor::hammer_stats(&model, &mut rng, n, a.samples)?;
    let mut values = serde_json::Map::new();
    for (label, r) in HAMMER_PAIR_LABELS.iter().zip(&stats.pairs) {
        values.insert((*label).into(), range_json(r));
    }
    for (label, r) in ["stress/f_sq", "stress/phi", "f_sq/phi"]
        .iter()
        .zip(&stats.coercivity)
    {
        values.insert(format!("coercivity {label}"), range_json(r));
    }
    let mut pass = stats
        .pairs
        .iter()
        .chain(&stats.coercivity)
        .all(|r| r.is_finite());
    if a.nf.p == 2.0 && a.nf.delta == 0.0 {
        // S = F = sym: the first two quantities coincide
        let mut dev: f64 = 0.0;
        for _ in 0..a.samples {
            let p = SymTensor::random(&mut rng, n, -1.0, 1.0);
            let q = SymTensor::random(&mut rng, n, -1.0, 1.0);
            let h = tensor::hammer_quantities(&model, &p, &q)?;
            if h.f_diff_sq > 0.0 {
                dev = dev.max((h.monotone - h.f_diff_sq).abs() / h.f_diff_sq);
            }
        }
        values.insert("linear_max_rel_dev".into(), json!(dev));
        pass &= dev <= 1e-12;
    }
    rep.push(
        "verify.hammer",
        "hammer-equivalence",
        json!({"p": a.nf.p, "delta": a.nf.delta, "dim": n, "samples": a.samples, "seed": seed}),
        Value::Object(values),
        pass,
    );
    Ok(())
}

fn unit_square(cells: usize) -> Result<UniformGrid> {
    at_least("grid", cells, 8)?;
    Ok(UniformGrid::cell_centered(&[0.0, 0.0], 1.0, cells)?)
}

fn eq2(a: &Eq2Args, rep: &mut Reporter) -> Result<()> {
    let nf = nfunction(&a.nf)?;
    let g = unit_square(a.grid)?;
    let hg = g.spacing();
    for &s in &a.h_steps {
        if s == 0 || s > a.margin_steps {
            usage!(
                "--h-steps must lie in 1..=margin-steps ({}), got {s}",
                a.margin_steps
            );
        }
    }
    let h0 = a.margin_steps as f64 * hg;
    let family = presets::analytic_family();
    let results: Vec<Result<(f64, bool)>> = family
        .par_iter()
        .map(|fun| {
            let mut worst: f64 = 0.0;
            let mut pass = true;
            for k in 0..2 {
                for &s in &a.h_steps {
                    for sign in [Sign::Plus, Sign::Minus] {
                        let r = grid::modular_dq_inequality(
                            &nf,
                            &g,
                            fun.f,
                            fun.df[k],
                            k,
                            s as f64 * hg,
                            h0,
                            sign,
                        )?;
                        pass &= r.pass;
                        worst = worst.max(r.lhs / r.rhs);
                    }
                }
            }
            Ok((worst, pass))
        })
        .collect();
    for (fun, r) in family.iter().zip(results) {
        let (worst, pass) = r?;
        rep.push(
            "verify.eq2",
            "difference-quotient-modular-bound",
            json!({"p": a.nf.p, "delta": a.nf.delta, "grid": a.grid, "h_steps": a.h_steps, "margin_steps": a.margin_steps, "function": fun.name}),
            json!({"max_lhs_over_rhs": worst}),
            pass,
        );
    }
    Ok(())
}

fn diffquot(a: &DiffquotArgs, rep: &mut Reporter) -> Result<()> {
    let nf = nfunction(&a.nf)?;
    let g = unit_square(a.grid)?;
    let hg = g.spacing();
    if a.h_steps.iter().any(|&s| s == 0 || s >= a.grid / 2) {
        usage!("--h-steps must lie in 1..{}", a.grid / 2);
    }
    let bump = |cx: f64, cy: f64, r: f64| {
        Field::scalar_from_fn(g.clone(), move |x| {
            let s = ((x[0] - cx).powi(2) + (x[1] - cy).powi(2)) / (r * r);
            if s < 1.0 {
                (-1.0 / (1.0 - s)).exp()
            } else {
                0.0
            }
        })
    };
    let f = bump(0.45, 0.5, 0.3);
    let other = bump(0.55, 0.45, 0.35);
    let smooth = Field::scalar_from_fn(g.clone(), |x| (3.0 * x[0]).sin() * (2.0 * x[1]).cos());
    let u = Field::from_fn(g.clone(), Rank::Vector, |x, out| {
        let b = (-8.0 * ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2))).exp();
        out[0] = -(x[1] - 0.5) * b;
        out[1] = (x[0] - 0.5) * b;
    });
    let du = grid::sym_gradient(&u)?;
    let model = StressModel::new(nf, 1.0)?;
    let (mut prod, mut parts, mut comm): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut equiv = Vec::new();
    for k in 0..2 {
        for &s in &a.h_steps {
            let h = s as f64 * hg;
            for sign in [Sign::Plus, Sign::Minus] {
                prod = prod.max(grid::product_rule_check(&f, &smooth, k, h, sign)?);
                comm = comm.max(grid::commute_check(&smooth, k, h, sign)?);
                comm = comm.max(grid::commute_check(&f, k, h, sign)?);
                let e = tensor::diffquot_equiv(&model, &du, h, k, sign)?;
                equiv.push(json!({
                    "k": k, "h": h, "sign": if sign == Sign::Plus { "+" } else { "-" },
                    "stress_vs_f": range_json(&e.stress_vs_f),
                    "stress_vs_weighted": range_json(&e.stress_vs_weighted),
                    "f_vs_weighted": range_json(&e.f_vs_weighted),
                }));
            }
            parts = parts.max(grid::partial_integration_check(&f, &other, k, h)?);
        }
    }
    let params = json!({"p": a.nf.p, "delta": a.nf.delta, "grid": a.grid, "h_steps": a.h_steps, "label": nf.label()});
    rep.push(
        "verify.diffquot",
        "difference-quotient-product-rule",
        params.clone(),
        json!({"max_dev": prod}),
        prod <= 1e-10,
    );
    rep.push(
        "verify.diffquot",
        "difference-quotient-partial-integration",
        params.clone(),
        json!({"max_dev": parts}),
        parts <= 1e-10,
    );
    rep.push(
        "verify.diffquot",
        "difference-quotient-commutation",
        params.clone(),
        json!({"max_dev": comm}),
        comm <= 1e-12,
    );
    let finite = equiv.iter().all(|e| {
        ["stress_vs_f", "stress_vs_weighted", "f_vs_weighted"]
            .iter()
            .all(|k| {
                e[k]["min"].as_f64().is_some_and(|v| v > 0.0)
                    && e[k]["max"].as_f64().is_some_and(f64::is_finite)
            })
    });
    rep.push(
        "verify.diffquot",
        "difference-quotient-equivalence",
        params,
        json!({"ranges": equiv}),
        finite,
    );
    Ok(())
}
