use anyhow::Result;
use bogotool_core::whitney::{self, Annulus, Ball, BoxDomain, Domain};
use serde_json::json;

use super::{at_least, rng, usage};
use crate::cli::{Shape, WhitneyArgs};
use crate::io;
use crate::report::Reporter;

pub fn run(a: &WhitneyArgs, seed: u64, rep: &mut Reporter) -> Result<()> {
    if !(-20..=0).contains(&a.min_level) {
        usage!("--min-level must lie in -20..=0, got {}", a.min_level);
    }
    at_least("samples", a.samples, 1)?;
    if !(0.0..=1.0).contains(&a.min_coverage) {
        usage!("--min-coverage must lie in [0, 1]");
    }
    let ball = Ball {
        center: vec![0.0, 0.0],
        radius: 1.0,
    };
    let square = BoxDomain {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
    };
    let annulus = Annulus {
        center: vec![0.0, 0.0],
        inner: 0.5,
        outer: 1.0,
    };
    let (name, domain): (&str, &dyn Domain) = match a.shape {
        Shape::Ball => ("ball", &ball),
        Shape::Square => ("square", &square),
        Shape::Annulus => ("annulus", &annulus),
    };
    let n = domain.dim();
    let band = a
        .band
        .unwrap_or(5.0 * (n as f64).sqrt() * 2f64.powi(a.min_level));
    if band.is_nan() || band < 0.0 {
        usage!("--band must be nonnegative");
    }
    let d = whitney::whitney_decompose(domain, a.min_level)?;
    let samples = whitney::sample_interior(domain, &mut rng(seed), a.samples);
    let r = whitney::verify_decomposition(&d.cubes, domain, &samples, band)?;
    if let Some(path) = &a.cubes {
        io::write_cubes_csv(path, &d.cubes)?;
    }
    let mut levels = std::collections::BTreeMap::new();
    for c in &d.cubes {
        *levels.entry(c.level).or_insert(0usize) += 1;
    }
    rep.push(
        "whitney",
        "whitney-decomposition",
        json!({"shape": name, "min_level": a.min_level, "samples": a.samples, "band": band, "min_coverage": a.min_coverage, "seed": seed}),
        json!({
            "cubes": r.cubes,
            "cubes_per_level": levels.iter().map(|(l, c)| json!([l, c])).collect::<Vec<_>>(),
            "overlaps": r.overlaps,
            "distance_violations": r.distance_violations,
            "min_distance_ratio": r.min_distance_ratio,
            "covered_fraction": r.covered_fraction,
            "coverage": r.coverage,
            "unresolved_cubes": d.unresolved_cubes,
            "unresolved_measure": d.unresolved_measure,
            "exact": r.exact,
        }),
        r.disjoint() && r.distance_ok() && r.coverage >= a.min_coverage,
    );
    Ok(())
}
