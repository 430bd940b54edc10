//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bogotool_core::bogovskii::{self, Cube, Mollifier};
use bogotool_core::czop::{self, NonCancelling, Riesz, TruncatedFamily, Weight};
use bogotool_core::grid::{self, Field, Rank, Sign, UniformGrid};
use bogotool_core::nfunc::{self, NFunctionPD};
use bogotool_core::pstokes::{self, PStokesProblem};
use bogotool_core::tensor::{self, StressModel, SymTensor};
use bogotool_core::whitney::{self, Ball, BoxDomain};
use bogotool_core::{math, quad};

/// Writes past the test harness capture so every line lands in the log.
fn say(line: String) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

struct Criterion {
    id: u32,
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new(id: u32) -> Self {
        Self {
            id,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, what: impl Into<String>, pass: bool) {
        let what = what.into();
        say(format!(
            "    criterion {:>2} {} {what}",
            self.id,
            if pass { "ok  " } else { "FAIL" }
        ));
        self.checks.push((what, pass));
    }

    fn finish(self, title: &str) {
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| !c.1)
            .map(|c| c.0.as_str())
            .collect();
        let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
        say(format!("criterion {:>2} {verdict}: {title}", self.id));
        assert!(
            failed.is_empty(),
            "criterion {} failed: {failed:?}",
            self.id
        );
    }
}

fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn phi_by_quadrature(p: f64, d: f64, t: f64) -> f64 {
    quad::adaptive(|s| math::powf(d + s, p - 2.0) * s, 0.0, t, 1e-300, 1e-13).unwrap()
}

#[test]
fn criterion_01_nfunction_calculus() {
    let mut c = Criterion::new(1);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_eval: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    let mut worst_fy: f64 = 0.0;
    for _ in 0..1000 {
        let p = rng.gen_range(1.1..3.0);
        let d = rng.gen_range(0.0..1.0);
        let t = math::exp(rng.gen_range(math::ln(1e-3)..math::ln(1e2)));
        let nf = NFunctionPD::new(p, d).unwrap();
        let exact = phi_by_quadrature(p, d, t);
        worst_eval = worst_eval.max((nf.eval(t).unwrap() - exact).abs() / exact);

        let a = rng.gen_range(0.0..2.0);
        let direct = quad::adaptive(
            |s| nf.prime(a + s).unwrap() * s / (a + s),
            0.0,
            t,
            1e-300,
            1e-13,
        )
        .unwrap();
        let shifted = nf.shifted(a).unwrap().eval(t).unwrap();
        worst_shift = worst_shift.max((shifted - direct).abs() / direct);

        let s = nf.prime(t).unwrap();
        let fy = nf.eval(t).unwrap() + nf.conjugate(s).unwrap();
        worst_fy = worst_fy.max((fy - s * t).abs() / (s * t));
    }
    c.check(
        format!("phi vs quadrature, max rel err {worst_eval:.2e} <= 1e-8"),
        worst_eval <= 1e-8,
    );
    c.check(
        format!("shift collapse, max rel err {worst_shift:.2e} <= 1e-10"),
        worst_shift <= 1e-10,
    );
    c.check(
        format!("Fenchel-Young equality, max rel err {worst_fy:.2e} <= 1e-6"),
        worst_fy <= 1e-6,
    );

    for &(p, d) in &[(1.5, 0.1), (1.2, 0.01), (2.0, 0.0), (3.0, 1.0)] {
        let nf = NFunctionPD::new(p, d).unwrap();
        for eps in [0.1, 1.0] {
            let sample = nfunc::log_uniform_pairs(&mut rng, 10_000, 1e-3, 1e3);
            let r = nfunc::young_check(&nf, eps, &sample).unwrap();
            c.check(
                format!(
                    "Young p={p} delta={d} eps={eps}: c={:.4}/{:.4}, violations {}/{} of {}",
                    r.c_eps_conjugate,
                    r.c_eps_derivative,
                    r.violations_conjugate,
                    r.violations_derivative,
                    r.samples
                ),
                r.pass(),
            );
        }
    }
    c.finish("N-function calculus");
}

#[test]
fn criterion_02_hammer_equivalences() {
    let mut c = Criterion::new(2);
    let linear = StressModel::power_law(2.0, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let p = SymTensor::random(&mut rng, 3, -1.0, 1.0);
        let q = SymTensor::random(&mut rng, 3, -1.0, 1.0);
        let h = tensor::hammer_quantities(&linear, &p, &q).unwrap();
        worst = worst.max((h.monotone - h.f_diff_sq).abs() / h.f_diff_sq.max(f64::MIN_POSITIVE));
    }
    c.check(
        format!("p=2 delta=0: monotone vs |F(P)-F(Q)|^2, max rel dev {worst:.2e} <= 1e-12"),
        worst <= 1e-12,
    );

    for p in [1.2, 1.5, 2.0] {
        for d in [0.01, 0.1, 1.0] {
            let model = StressModel::power_law(p, d).unwrap();
            let runs: Vec<tensor::HammerStats> = [11u64, 22, 33]
                .iter()
                .map(|&seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    tensor::hammer_stats(&model, &mut rng, 2, 10_000).unwrap()
                })
                .collect();
            let finite = runs.iter().all(|r| r.pairs.iter().all(|q| q.is_finite()));
            let mut var: f64 = 0.0;
            for k in 0..7 {
                let mins: Vec<f64> = runs.iter().map(|r| r.pairs[k].min).collect();
                let maxs: Vec<f64> = runs.iter().map(|r| r.pairs[k].max).collect();
                var = var.max(spread(&mins) - 1.0).max(spread(&maxs) - 1.0);
            }
            let r = &runs[0].pairs;
            c.check(
                format!(
                    "p={p} delta={d}: finite={finite}, {}=[{:.3},{:.3}], {}=[{:.3},{:.3}], endpoint seed variation {:.1}% < 10%",
                    tensor::HAMMER_PAIR_LABELS[0],
                    r[0].min,
                    r[0].max,
                    tensor::HAMMER_PAIR_LABELS[5],
                    r[5].min,
                    r[5].max,
                    100.0 * var
                ),
                finite && var < 0.1,
            );
        }
    }
    c.finish("hammer equivalences");
}

type Analytic = (Box<dyn Fn(&[f64]) -> f64>, [Box<dyn Fn(&[f64]) -> f64>; 2]);

/// Five analytic functions on the unit square with their partial derivatives.
fn analytic_family() -> Vec<Analytic> {
    let tau = 2.0 * std::f64::consts::PI;
    vec![
        (
            Box::new(move |x| (tau * x[0]).sin() * (0.5 * tau * x[1]).cos()),
            [
                Box::new(move |x| tau * (tau * x[0]).cos() * (0.5 * tau * x[1]).cos()),
                Box::new(move |x| -0.5 * tau * (tau * x[0]).sin() * (0.5 * tau * x[1]).sin()),
            ],
        ),
        (
            Box::new(|x| (-10.0 * ((x[0] - 0.4).powi(2) + (x[1] - 0.6).powi(2))).exp()),
            [
                Box::new(|x| {
                    -20.0
                        * (x[0] - 0.4)
                        * (-10.0 * ((x[0] - 0.4).powi(2) + (x[1] - 0.6).powi(2))).exp()
                }),
                Box::new(|x| {
                    -20.0
                        * (x[1] - 0.6)
                        * (-10.0 * ((x[0] - 0.4).powi(2) + (x[1] - 0.6).powi(2))).exp()
                }),
            ],
        ),
        (
            Box::new(|x| x[0].powi(3) - 2.0 * x[1] * x[1] + x[0] * x[1]),
            [
                Box::new(|x| 3.0 * x[0] * x[0] + x[1]),
                Box::new(|x| -4.0 * x[1] + x[0]),
            ],
        ),
        (
            Box::new(|x| (5.0 * (x[0] - 0.5)).tanh() + 0.5 * (3.0 * x[1]).sin()),
            [
                Box::new(|x| 5.0 / (5.0 * (x[0] - 0.5)).cosh().powi(2)),
                Box::new(|x| 1.5 * (3.0 * x[1]).cos()),
            ],
        ),
        (
            Box::new(|x| 1.0 / (1.0 + 4.0 * (x[0] * x[0] + x[1] * x[1]))),
            [
                Box::new(|x| -8.0 * x[0] / (1.0 + 4.0 * (x[0] * x[0] + x[1] * x[1])).powi(2)),
                Box::new(|x| -8.0 * x[1] / (1.0 + 4.0 * (x[0] * x[0] + x[1] * x[1])).powi(2)),
            ],
        ),
    ]
}

#[test]
fn criterion_03_difference_quotient_calculus() {
    let mut c = Criterion::new(3);
    let g = UniformGrid::cell_centered(&[0.0, 0.0], 1.0, 128).unwrap();
    let hg = g.spacing();
    let bump = |cx: f64, cy: f64, r: f64| {
        let g = g.clone();
        Field::scalar_from_fn(g, move |x| {
            let s = ((x[0] - cx).powi(2) + (x[1] - cy).powi(2)) / (r * r);
            if s < 1.0 {
                (-1.0 / (1.0 - s)).exp()
            } else {
                0.0
            }
        })
    };
    let f = bump(0.45, 0.5, 0.3);
    let h_field = bump(0.55, 0.45, 0.35);
    let smooth = Field::scalar_from_fn(g.clone(), |x| (3.0 * x[0]).sin() * (2.0 * x[1]).cos());
    let mut prod: f64 = 0.0;
    let mut parts: f64 = 0.0;
    let mut comm: f64 = 0.0;
    for k in 0..2 {
        for j in 0..3 {
            let h = hg * (1 << j) as f64;
            for sign in [Sign::Plus, Sign::Minus] {
                prod = prod.max(grid::product_rule_check(&f, &smooth, k, h, sign).unwrap());
                comm = comm.max(grid::commute_check(&smooth, k, h, sign).unwrap());
                comm = comm.max(grid::commute_check(&f, k, h, sign).unwrap());
            }
            parts = parts.max(grid::partial_integration_check(&f, &h_field, k, h).unwrap());
        }
    }
    c.check(
        format!("product rule, max dev {prod:.2e} <= 1e-10"),
        prod <= 1e-10,
    );
    c.check(
        format!("partial integration, max dev {parts:.2e} <= 1e-10"),
        parts <= 1e-10,
    );
    c.check(
        format!("commutation with the gradient, max dev {comm:.2e} <= 1e-12"),
        comm <= 1e-12,
    );

    let fam = analytic_family();
    for &(p, d) in &[(1.5, 0.1), (2.0, 0.0), (1.2, 0.01)] {
        let nf = NFunctionPD::new(p, d).unwrap();
        let mut all = true;
        let mut worst: f64 = 0.0;
        for (fun, der) in &fam {
            for k in 0..2 {
                for j in 0..3 {
                    let h = hg * (1 << j) as f64;
                    for sign in [Sign::Plus, Sign::Minus] {
                        let r = grid::modular_dq_inequality(
                            &nf,
                            &g,
                            fun,
                            &der[k],
                            k,
                            h,
                            4.0 * hg,
                            sign,
                        )
                        .unwrap();
                        all &= r.pass;
                        worst = worst.max(r.lhs / r.rhs);
                    }
                }
            }
        }
        c.check(
            format!("modular inequality p={p} delta={d} at N=128, max lhs/rhs {worst:.4}"),
            all,
        );
    }
    c.finish("difference-quotient calculus");
}

#[test]
fn criterion_04_whitney() {
    let mut c = Criterion::new(4);
    let band = 5.0 * math::sqrt(2.0) * math::powi(2.0, -12);
    let ball = Ball {
        center: vec![0.0, 0.0],
        radius: 1.0,
    };
    let square = BoxDomain {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    for (name, dom) in [("ball", &ball as &dyn whitney::Domain), ("square", &square)] {
        let d = whitney::whitney_decompose(dom, -12).unwrap();
        let samples = whitney::sample_interior(dom, &mut rng, 100_000);
        let r = whitney::verify_decomposition(&d.cubes, dom, &samples, band).unwrap();
        c.check(
            format!(
                "{name}: {} cubes pairwise disjoint ({} overlaps)",
                r.cubes, r.overlaps
            ),
            r.disjoint(),
        );
        c.check(
            format!(
                "{name}: dist > 4 diam for every cube (min ratio {:.4})",
                r.min_distance_ratio
            ),
            r.distance_ok() && r.exact,
        );
        c.check(
            format!(
                "{name}: coverage {:.5} >= 0.999 (union of cubes {:.5}, rest within {band:.2e} of the boundary)",
                r.coverage, r.covered_fraction
            ),
            r.coverage >= 0.999,
        );
    }
    c.finish("Whitney decomposition");
}

#[test]
fn criterion_05_cz_kernels() {
    let mut c = Criterion::new(5);
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let points = vec![vec![0.0, 0.0], vec![0.3, -0.7], vec![2.0, 1.0]];
    let r = czop::cz_check(&Riesz { n: 2, i: 0 }, &points, 256, 2000, &mut rng).unwrap();
    c.check(
        format!(
            "Riesz CZ1 homogeneity dev {:.2e} <= 1e-12",
            r.homogeneity_dev
        ),
        r.homogeneity_dev <= 1e-12,
    );
    c.check(
        format!("Riesz CZ2 mean-zero dev {:.2e} <= 1e-10", r.mean_zero_dev),
        r.mean_zero_dev <= 1e-10,
    );
    let k2 = r.kappa2 * r.kappa2;
    c.check(
        format!(
            "Riesz CZ3 kappa2^2 = {k2:.12}, |kappa2^2 - pi| = {:.2e} <= 1e-6",
            (k2 - std::f64::consts::PI).abs()
        ),
        (k2 - std::f64::consts::PI).abs() <= 1e-6,
    );
    let nc = czop::cz_check(&NonCancelling { n: 2 }, &points, 256, 2000, &mut rng).unwrap();
    let dev = (nc.mean_zero_dev - 2.0 * std::f64::consts::PI).abs();
    c.check(
        format!(
            "non-cancelling kernel fails CZ2 with dev {:.12} = 2 pi within {dev:.2e} <= 1e-6",
            nc.mean_zero_dev
        ),
        dev <= 1e-6 && nc.mean_zero_dev > 1e-10,
    );
    c.finish("Calderon-Zygmund kernel checks");
}

#[test]
fn criterion_06_operator_bounds() {
    let mut c = Criterion::new(6);
    let g = UniformGrid::cell_centered(&[0.0, 0.0], 1.0, 128).unwrap();
    let eps: Vec<f64> = (3..=7).map(|j| math::powi(2.0, -j)).collect();
    let kernel = Riesz { n: 2, i: 0 };
    let fam = TruncatedFamily::compute(&kernel, &eps, czop::standard_test_family(&g)).unwrap();
    for w in ["const", "power:0.5"] {
        let r = czop::weighted_bound_ratio(&fam, 2.0, &Weight::parse(w, 2).unwrap()).unwrap();
        c.check(
            format!(
                "L2 weight {w}: sup over family by eps {:?}, variation {:.3} < 2",
                r.sup_by_eps
                    .iter()
                    .map(|v| format!("{v:.3}"))
                    .collect::<Vec<_>>(),
                r.variation
            ),
            r.variation < 2.0,
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let sk = czop::sk_check(&kernel, &[0.0, 0.0], &[1.0, 1.0], 20_000, &mut rng).unwrap();
    let cz = czop::cz_check(&kernel, &[vec![0.5, 0.5]], 256, 10, &mut rng).unwrap();
    let kappa = sk.kappa1 + cz.kappa2;
    let nf = NFunctionPD::new(1.5, 0.1).unwrap();
    let o = czop::orlicz_bound_ratio(&fam, &nf, kappa).unwrap();
    c.check(
        format!(
            "Orlicz p=1.5 delta=0.1 kappa={kappa:.3}: sup by eps {:?}, variation {:.3} < 2",
            o.sup_by_eps
                .iter()
                .map(|v| format!("{v:.3e}"))
                .collect::<Vec<_>>(),
            o.variation
        ),
        o.variation < 2.0,
    );
    for p in [1.5, 2.0, 3.0] {
        let a = czop::ap_constant(&Weight::Constant(1.0), p, &g).unwrap();
        c.check(format!("[1]_A_{p} = {a}"), a == 1.0);
    }
    c.finish("weighted and Orlicz bounds of truncated singular integrals");
}

#[test]
fn criterion_07_bogovskii_1d() {
    let mut c = Criterion::new(7);
    let m1 = Mollifier::new(1).unwrap();
    let tau = 2.0 * std::f64::consts::PI;
    let fs: Vec<(&str, Box<dyn Fn(f64) -> f64>)> = vec![
        ("sin(2 pi x)", Box::new(move |x| (tau * x).sin())),
        ("cos(4 pi x)", Box::new(move |x| (2.0 * tau * x).cos())),
        ("x exp(-20 x^2)", Box::new(|x| x * (-20.0 * x * x).exp())),
    ];
    let g = UniformGrid::cell_centered(&[-0.5], 1.0, 1024).unwrap();
    let fields: Vec<Field> = fs
        .iter()
        .map(|(_, f)| Field::scalar_from_fn(g.clone(), |x| f(x[0])))
        .collect();
    let sols = bogovskii::bogovskii_apply_batch(&m1, &fields, &Cube::unit(1), 16, false).unwrap();
    for ((name, f), s) in fs.iter().zip(&sols) {
        let mut err: f64 = 0.0;
        for i in 0..g.len() {
            let x = g.point(i)[0];
            let exact = quad::adaptive(f, -0.5, x, 1e-14, 1e-12).unwrap();
            err = err.max((s.v.values()[i] - exact).abs());
        }
        c.check(
            format!("{name}: max |Bf - antiderivative| = {err:.2e} <= 1e-3 at N=1024"),
            err <= 1e-3,
        );
    }
    c.finish("Bogovskii operator against the one-dimensional antiderivative");
}

/// Five zero-mean fields on the cube `λ(-½, ½)²`, defined by scaling.
fn bogovskii_family(g: &UniformGrid, lam: f64) -> Vec<Field> {
    let tau = 2.0 * std::f64::consts::PI;
    let bump = |x: &[f64], s: f64| (-(x[0] * x[0] + x[1] * x[1]) * s).exp();
    let fam: Vec<Box<dyn Fn(&[f64]) -> f64>> = vec![
        Box::new(move |x| -40.0 * x[0] * bump(x, 20.0)),
        Box::new(move |x| -60.0 * x[1] * bump(x, 30.0)),
        Box::new(move |x| x[0] * x[1] * bump(x, 25.0)),
        Box::new(move |x| (tau * x[0]).sin() * bump(x, 15.0)),
        Box::new(move |x| x[0] * (1.0 - 20.0 * x[1] * x[1]) * bump(x, 18.0)),
    ];
    fam.iter()
        .map(|f| Field::scalar_from_fn(g.clone(), |x| f(&[x[0] / lam, x[1] / lam])))
        .collect()
}

fn cube_and_grid(lam: f64, n: usize) -> (Cube, UniformGrid) {
    (
        Cube::new(&[0.0, 0.0], lam).unwrap(),
        UniformGrid::cell_centered(&[-0.5 * lam, -0.5 * lam], lam, n).unwrap(),
    )
}

#[test]
fn criterion_08_bogovskii_2d() {
    let mut c = Criterion::new(8);
    let m2 = Mollifier::new(2).unwrap();

    let mut res: Vec<Vec<f64>> = Vec::new();
    for n in [16usize, 32, 64] {
        let (cube, g) = cube_and_grid(1.0, n);
        let sols =
            bogovskii::bogovskii_apply_batch(&m2, &bogovskii_family(&g, 1.0), &cube, 16, false)
                .unwrap();
        res.push(
            sols.iter()
                .map(|s| bogovskii::divergence_residual(s).unwrap().l2_rel.unwrap())
                .collect(),
        );
    }
    for j in 0..5 {
        let f1 = res[0][j] / res[1][j];
        let f2 = res[1][j] / res[2][j];
        c.check(
            format!(
                "f{}: residual {:.3e} -> {:.3e} -> {:.3e}, factors {f1:.2}, {f2:.2} >= 1.5",
                j + 1,
                res[0][j],
                res[1][j],
                res[2][j]
            ),
            f1 >= 1.5 && f2 >= 1.5,
        );
    }

    let (cube, g) = cube_and_grid(1.0, 128);
    let sols = bogovskii::bogovskii_apply_batch(&m2, &bogovskii_family(&g, 1.0), &cube, 16, false)
        .unwrap();
    let w = Weight::parse("power:0.5", 2).unwrap().sample(&g).unwrap();
    for (j, s) in sols.iter().enumerate() {
        for (label, weight) in [("unweighted", None), ("|x|^1/2", Some(w.as_slice()))] {
            let grad = bogovskii::gradient_bound_ratio(s, 2.0, weight).unwrap();
            let dq: Vec<f64> = (0..6)
                .map(|e| {
                    bogovskii::diffquot_bound_ratio(s, 2.0, weight, g.spacing() * (1 << e) as f64)
                        .unwrap()
                        .max()
                })
                .collect();
            let sp = spread(&dq);
            let finite = grad.is_finite() && dq.iter().all(|v| v.is_finite() && *v > 0.0);
            c.check(
                format!("f{} {label} p=2 N=128: gradient ratio {grad:.4}, difference-quotient ratio h-spread {sp:.3} < 2", j + 1),
                finite && sp < 2.0,
            );
        }
    }

    let nf = NFunctionPD::new(1.5, 0.1).unwrap();
    let mut per_lambda: Vec<Vec<f64>> = Vec::new();
    for lam in [0.25, 1.0, 4.0] {
        let (cube, g) = cube_and_grid(lam, 32);
        let sols =
            bogovskii::bogovskii_apply_batch(&m2, &bogovskii_family(&g, lam), &cube, 16, false)
                .unwrap();
        let mut vals = Vec::new();
        for s in &sols {
            for p in [1.5, 2.0] {
                vals.push(bogovskii::gradient_bound_ratio(s, p, None).unwrap());
                for e in 0..3 {
                    vals.push(
                        bogovskii::diffquot_bound_ratio(s, p, None, g.spacing() * (1 << e) as f64)
                            .unwrap()
                            .max(),
                    );
                }
            }
            vals.push(
                bogovskii::orlicz_bound_ratios(s, &nf, g.spacing())
                    .unwrap()
                    .gradient,
            );
        }
        per_lambda.push(vals);
    }
    let mut worst: f64 = 0.0;
    for k in 0..per_lambda[0].len() {
        let v: Vec<f64> = per_lambda.iter().map(|r| r[k]).collect();
        worst = worst.max(spread(&v) - 1.0);
    }
    c.check(
        format!(
            "{} ratios over cubes lambda Q, lambda in {{1/4, 1, 4}}: max deviation {:.2e} < 5%",
            per_lambda[0].len(),
            worst
        ),
        worst < 0.05,
    );
    c.finish("Bogovskii operator in two dimensions");
}

#[test]
fn criterion_09_second_differences() {
    let mut c = Criterion::new(9);
    let m = Mollifier::new(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(901);
    let r = bogovskii::second_difference_bound_check(&m, &mut rng, 100_000);
    c.check(
        format!(
            "max ratio {:.6} <= 1 + 1e-6 over {} triples ({} skipped)",
            r.max_ratio, r.samples, r.skipped
        ),
        r.max_ratio <= 1.0 + 1e-6 && r.samples == 100_000,
    );
    c.finish("second differences of the mollifier");
}

fn zero_outer_layer(mut u: Field) -> Field {
    let g = u.grid().clone();
    for i in 0..g.len() {
        if !grid::is_inner(&g, i, 1) {
            u.at_mut(i).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    u
}

/// Cell-centered `(∂₁∂₂ψ, ½(∂₂²ψ - ∂₁²ψ))` by difference quotients, the pure
/// derivatives averaged over the four cell corners.
fn cell_strain(psi: &Field) -> Vec<f64> {
    let g = psi.grid().clone();
    let h = g.spacing();
    let dq = |f: &Field, k, s| grid::diff_quot(f, k, h, s).unwrap();
    let mixed = dq(&dq(psi, 0, Sign::Plus), 1, Sign::Plus);
    // d⁺d⁻ is minus the second difference
    let n11 = dq(&dq(psi, 0, Sign::Plus), 0, Sign::Minus);
    let n22 = dq(&dq(psi, 1, Sign::Plus), 1, Sign::Minus);
    let m = g.dims()[0];
    let mut out = Vec::with_capacity(2 * (m - 1) * (m - 1));
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            let corners = [
                i * m + j,
                (i + 1) * m + j,
                i * m + j + 1,
                (i + 1) * m + j + 1,
            ];
            let avg = |f: &Field| corners.iter().map(|&k| f.values()[k]).sum::<f64>() / 4.0;
            out.push(mixed.values()[i * m + j]);
            out.push(0.5 * (avg(&n11) - avg(&n22)));
        }
    }
    out
}

/// Direct solve of the p = 2, δ = 0 minimization: the energy is
/// `h² Σ (d₁₁² + d₁₂²) - h² Σ f·u`, so `2h² GᵀG ψ = h² Uᵀ f`.
fn linear_oracle(problem: &PStokesProblem) -> Field {
    let g = problem.grid().clone();
    let m = g.dims()[0];
    let h2 = g.cell_volume();
    let free: Vec<usize> = (0..g.len())
        .filter(|&k| {
            let (i, j) = (k / m, k % m);
            i >= 2 && j >= 2 && i + 2 < m && j + 2 < m
        })
        .collect();
    let cells = 2 * (m - 1) * (m - 1);
    let mut gm = DMatrix::<f64>::zeros(cells, free.len());
    let mut um = DMatrix::<f64>::zeros(2 * g.len(), free.len());
    for (c, &k) in free.iter().enumerate() {
        let mut e = Field::zeros(g.clone(), Rank::Scalar);
        e.values_mut()[k] = 1.0;
        for (r, v) in cell_strain(&e).into_iter().enumerate() {
            gm[(r, c)] = v;
        }
        let u = zero_outer_layer(grid::curl2d(&e).unwrap());
        for (r, v) in u.values().iter().enumerate() {
            um[(r, c)] = *v;
        }
    }
    let a = gm.transpose() * &gm * (2.0 * h2);
    let b = um.transpose() * DVector::from_column_slice(problem.forcing().values()) * h2;
    let x = a.cholesky().expect("the p = 2 system is SPD").solve(&b);
    let mut psi = Field::zeros(g, Rank::Scalar);
    for (c, &k) in free.iter().enumerate() {
        psi.values_mut()[k] = x[c];
    }
    psi
}

#[test]
fn criterion_10_pstokes_linear_oracle() {
    let mut c = Criterion::new(10);
    let model = StressModel::power_law(2.0, 0.0).unwrap();
    let f = pstokes::vortex_forcing(1.0, 32, pstokes::VORTEX_AMPLITUDE).unwrap();
    let pr = PStokesProblem::new(model, f).unwrap();
    let s = pstokes::solve(&pr, 1e-10, 20).unwrap();
    c.check(
        format!(
            "solver converged in {} steps, |grad| = {:.2e}",
            s.iterations, s.grad_norm
        ),
        s.converged,
    );
    let psi = linear_oracle(&pr);
    let u = zero_outer_layer(grid::curl2d(&psi).unwrap());
    let du = grid::gradient(&u).unwrap();
    let err = grid::gradient(&s.u)
        .unwrap()
        .axpby(1.0, &du, -1.0)
        .unwrap()
        .lp_norm(2.0, None)
        / du.lp_norm(2.0, None);
    c.check(
        format!("relative discrete H1 error vs direct solve {err:.2e} <= 1e-8"),
        err <= 1e-8,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let r = pstokes::weak_residual(&s, &pr, 20, &mut rng).unwrap();
    c.check(
        format!("weak residual over 20 test fields {r:.2e} <= 1e-8"),
        r <= 1e-8,
    );
    c.finish("p-Stokes solver against the linear oracle");
}

#[test]
fn criterion_11_pstokes_nonlinear() {
    let mut c = Criterion::new(11);
    let tol = 1e-8;
    for p in [1.5, 1.8] {
        let model = StressModel::power_law(p, 0.1).unwrap();
        let f = pstokes::vortex_forcing(1.0, 64, pstokes::VORTEX_AMPLITUDE).unwrap();
        let pr = PStokesProblem::new(model, f).unwrap();
        let s = pstokes::solve(&pr, tol, 100).unwrap();
        let target = tol * (1.0 + math::norm(pr.forcing().values()));
        c.check(
            format!(
                "p={p} N=64: converged={} in {} steps, |grad| {:.2e} <= {target:.2e}",
                s.converged, s.iterations, s.grad_norm
            ),
            s.converged && s.grad_norm <= target,
        );
        let monotone = s.energy_history.windows(2).all(|w| w[1] <= w[0]);
        c.check(
            format!(
                "p={p}: energy nonincreasing over {} accepted iterates",
                s.energy_history.len()
            ),
            monotone,
        );
        let div = pstokes::interior_divergence(&s, 1).unwrap();
        c.check(
            format!("p={p}: max interior |div u| = {div:.2e} <= 1e-10"),
            div <= 1e-10,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1101);
        let r = pstokes::weak_residual(&s, &pr, 20, &mut rng).unwrap();
        c.check(
            format!("p={p}: weak residual {r:.2e} <= 10 tol"),
            r <= 10.0 * tol,
        );

        let small = PStokesProblem::new(
            model_for(p),
            pstokes::vortex_forcing(1.0, 32, pstokes::VORTEX_AMPLITUDE).unwrap(),
        )
        .unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let psi = random_stream(&small, &mut rng, 1e-2);
            let d = random_stream(&small, &mut rng, 1.0);
            let grad = pstokes::energy_gradient(&small, &psi).unwrap();
            let e = 1e-6;
            let j =
                |t: f64| pstokes::discrete_energy(&small, &psi.axpby(1.0, &d, t).unwrap()).unwrap();
            // five-point central difference
            let fd = (8.0 * (j(e) - j(-e)) - (j(2.0 * e) - j(-2.0 * e))) / (12.0 * e);
            let an: f64 = grad
                .values()
                .iter()
                .zip(d.values())
                .map(|(a, b)| a * b)
                .sum();
            worst = worst.max((an - fd).abs() / an.abs());
        }
        c.check(
            format!("p={p}: gradient vs central differences, max rel err {worst:.2e} < 1e-6"),
            worst < 1e-6,
        );
    }
    c.finish("nonlinear p-Stokes solves");
}

fn model_for(p: f64) -> StressModel {
    StressModel::power_law(p, 0.1).unwrap()
}

fn random_stream<R: Rng>(pr: &PStokesProblem, rng: &mut R, scale: f64) -> Field {
    let m = pr.grid().dims()[0];
    let mut psi = Field::zeros(pr.grid().clone(), Rank::Scalar);
    for i in 2..m - 2 {
        for j in 2..m - 2 {
            psi.values_mut()[i * m + j] = rng.gen_range(-scale..scale);
        }
    }
    psi
}

#[test]
fn criterion_12_interior_regularity() {
    let mut c = Criterion::new(12);
    let q = Cube::new(&[0.5, 0.5], 0.5).unwrap();
    for p in [1.5, 2.0] {
        let mut ratios = Vec::new();
        for n in [16usize, 32, 64, 128] {
            let mut model = StressModel::power_law(p, 0.1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1201);
            model.calibrate(&mut rng, 2, 2000, 1.0);
            let f = pstokes::vortex_forcing(1.0, n, pstokes::VORTEX_AMPLITUDE).unwrap();
            let pr = PStokesProblem::new(model, f).unwrap();
            let s = pstokes::solve(&pr, 1e-8, 100).unwrap();
            if n < 128 {
                let cut = pstokes::CutoffSpec {
                    cube: q.clone(),
                    xi: Field::zeros(pr.grid().clone(), Rank::Scalar),
                    norm1: 0.0,
                    norm2: 0.0,
                };
                let r = pstokes::interior_regularity_check(&s, &pr, &cut, &[]).unwrap();
                let a = pstokes::apriori_ratio(&s, &pr).unwrap();
                say(format!(
                    "    criterion 12      p={p} N={n}: LHS {:.4e} RHS {:.4e} LHS/RHS {:.4} a priori ratio {a:.4} max|Du| {:.3}",
                    r.lhs,
                    r.rhs,
                    r.ratio,
                    s.du.max_abs()
                ));
                ratios.push(r.ratio);
                continue;
            }
            let g = pr.grid().clone();
            let cut = pstokes::make_cutoff(&q, &g, 8, 4).unwrap();
            let hg = g.spacing();
            let r = pstokes::interior_regularity_check(&s, &pr, &cut, &[hg, 2.0 * hg, 4.0 * hg])
                .unwrap();
            for e in &r.tang {
                say(format!(
                    "    criterion 12      p={p} N=128 k={} h={:.5}: xi^2 |d+ F(Du)|^2 sum {:.4e}, phi(xi |grad d+ u|) sum {:.4e}",
                    e.k, e.h, e.f_quotient, e.phi_quotient
                ));
            }
            c.check(
                format!(
                    "p={p} N=128: difference-quotient quantities h-spread {:.3} < 2 over h in {{hg, 2hg, 4hg}} (|xi|_1 {:.2}, |xi|_2 {:.2})",
                    r.tang_spread, r.cutoff_norm1, r.cutoff_norm2
                ),
                r.tang_spread < 2.0,
            );
        }
        let sp = spread(&ratios);
        c.check(
            format!(
                "p={p}: LHS/RHS over N in {{16, 32, 64}} = {:?}, spread {sp:.3} < 2",
                ratios.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
            ),
            sp < 2.0 && ratios.iter().all(|v| v.is_finite() && *v > 0.0),
        );
    }
    c.finish("interior regularity of p-Stokes flow");
}
