use anyhow::Result;
use bogotool_core::czop::{self, TruncatedFamily, Weight};
use bogotool_core::{NFunctionPD, UniformGrid};
use serde_json::json;

use super::{at_least, positive, rng, usage};
use crate::cli::{Cz, CzBoundArgs, CzCheckArgs};
use crate::report::Reporter;

pub fn run(cmd: &Cz, seed: u64, rep: &mut Reporter) -> Result<()> {
    match cmd {
        Cz::Check(a) => check(a, seed, rep),
        Cz::Bound(a) => bound(a, seed, rep),
    }
}

/// `κ₁` on the unit cube and `κ₂` from the sphere rule.
fn kappas(
    kernel: &dyn czop::Kernel,
    n: usize,
    order: usize,
    samples: usize,
    seed: u64,
) -> Result<(czop::SkReport, czop::CzReport)> {
    let mut rng = rng(seed);
    let lo = vec![0.0; n];
    let hi = vec![1.0; n];
    let sk = czop::sk_check(kernel, &lo, &hi, samples, &mut rng)?;
    let points = vec![
        vec![0.0; n],
        (0..n).map(|i| 0.3 - 0.5 * i as f64).collect(),
        vec![1.0; n],
    ];
    let cz = czop::cz_check(kernel, &points, order, 200, &mut rng)?;
    Ok((sk, cz))
}

fn check(a: &CzCheckArgs, seed: u64, rep: &mut Reporter) -> Result<()> {
    if !(1..=3).contains(&a.dim) {
        usage!("--dim must lie in 1..=3");
    }
    at_least("samples", a.samples, 1)?;
    at_least("order", a.order, 2)?;
    let kernel = czop::builtin_kernel(&a.kernel, a.dim)
        .map_err(|e| anyhow::Error::new(super::Usage(e.to_string())))?;
    let (sk, cz) = kappas(kernel.as_ref(), a.dim, a.order, a.samples, seed)?;
    let params = json!({"kernel": a.kernel, "dim": a.dim, "samples": a.samples, "order": a.order, "seed": seed});
    rep.push(
        "cz.check",
        "standard-kernel-estimates",
        params.clone(),
        json!({"kappa1": sk.kappa1, "size": sk.ratios[0], "smooth_x": sk.ratios[1], "smooth_y": sk.ratios[2], "rejected": sk.rejected}),
        sk.kappa1.is_finite(),
    );
    rep.push(
        "cz.check",
        "calderon-zygmund-kernel",
        params,
        json!({
            "homogeneity_dev": cz.homogeneity_dev,
            "mean_zero_dev": cz.mean_zero_dev,
            "kappa2": cz.kappa2,
            "kappa2_sq": cz.kappa2 * cz.kappa2,
        }),
        cz.homogeneity_dev <= 1e-12 && cz.mean_zero_dev <= 1e-10 && cz.kappa2.is_finite(),
    );
    Ok(())
}

fn bound(a: &CzBoundArgs, seed: u64, rep: &mut Reporter) -> Result<()> {
    at_least("grid", a.grid, 8)?;
    positive("p", a.p)?;
    if a.p <= 1.0 {
        usage!("--p must exceed 1");
    }
    if a.eps_levels.is_empty() || a.eps_levels.iter().any(|&j| !(1..=20).contains(&j)) {
        usage!("--eps-levels must be nonempty and lie in 1..=20");
    }
    if let Some(j) = a
        .eps_levels
        .iter()
        .find(|&&j| 2f64.powi(-j) * (a.grid as f64) < 1.0)
    {
        usage!(
            "truncation radius 2^-{j} is below the grid spacing 1/{}",
            a.grid
        );
    }
    let kernel = czop::builtin_kernel(&a.kernel, 2)
        .map_err(|e| anyhow::Error::new(super::Usage(e.to_string())))?;
    let g = UniformGrid::cell_centered(&[0.0, 0.0], 1.0, a.grid)?;
    let eps: Vec<f64> = a.eps_levels.iter().map(|&j| 2f64.powi(-j)).collect();
    let fam = TruncatedFamily::compute(kernel.as_ref(), &eps, czop::standard_test_family(&g))?;
    let base =
        json!({"kernel": a.kernel, "grid": a.grid, "eps": eps, "max_variation": a.max_variation});
    for w in &a.weight {
        let omega =
            Weight::parse(w, 2).map_err(|e| anyhow::Error::new(super::Usage(e.to_string())))?;
        let r = czop::weighted_bound_ratio(&fam, a.p, &omega)?;
        let ap = czop::ap_constant(&omega, a.p, &g)?;
        let mut params = base.clone();
        params["weight"] = json!(omega.label());
        params["p"] = json!(a.p);
        rep.push(
            "cz.bound",
            "muckenhoupt-constant",
            params.clone(),
            json!({"ap_constant": ap}),
            ap.is_finite() && ap >= 1.0 - 1e-12,
        );
        rep.push(
            "cz.bound",
            "weighted-truncated-bound",
            params,
            json!({"sup_by_eps": r.sup_by_eps, "sup": r.sup, "variation": r.variation, "max_field_variation": r.max_field_variation, "skipped": r.skipped}),
            r.variation < a.max_variation,
        );
    }
    if let Some(o) = &a.orlicz {
        if o.len() != 2 {
            usage!("--orlicz takes P,DELTA");
        }
        let nf = NFunctionPD::new(o[0], o[1])
            .map_err(|e| anyhow::Error::new(super::Usage(e.to_string())))?;
        let (sk, cz) = kappas(kernel.as_ref(), 2, 256, a.samples, seed)?;
        let kappa = sk.kappa1 + cz.kappa2;
        let r = czop::orlicz_bound_ratio(&fam, &nf, kappa)?;
        let mut params = base;
        params["orlicz_p"] = json!(o[0]);
        params["orlicz_delta"] = json!(o[1]);
        params["seed"] = json!(seed);
        rep.push(
            "cz.bound",
            "orlicz-truncated-bound",
            params,
            json!({"kappa": kappa, "kappa1": sk.kappa1, "kappa2": cz.kappa2, "sup_by_eps": r.sup_by_eps, "sup": r.sup, "variation": r.variation}),
            r.variation < a.max_variation,
        );
    }
    Ok(())
}
