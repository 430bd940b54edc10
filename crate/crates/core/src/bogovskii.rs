//! The Bogovskii operator `B` on axis-aligned cubes, solving `div v = f` with
//! `v = 0` on the boundary for mean-zero `f`, and measurement of its gradient
//! and difference-quotient bounds.
//!
//! `Bf(x) = Σ_y f(y) k(x, y) h^n` over grid points `y ≠ x` in the cube, with
//! `k(x, y) = (x-y)/|x-y|^n ∫_{|x-y|}^∞ ϱ_λ(y + ξ e) ξ^{n-1} dξ` and
//! `e = (x-y)/|x-y|`. The ray integral runs over the chord of the ray with the
//! support ball of `ϱ_λ` and uses an `m`-point Gauss–Legendre rule.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{bail, Result};
use crate::grid::{self, Field, Rank, Sign};
use crate::math;
use crate::nfunc::NFunction;
use crate::quad::{self, GaussLegendre};

/// Support radius of the unscaled bump.
pub const BUMP_RADIUS: f64 = 0.2;

/// `ϱ(x) = c exp(-1 / (1 - |x/R|²))` for `|x| < R = 1/5`, normalized to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier {
    n: usize,
    c_norm: f64,
    norms: [f64; 4],
}

/// Derivatives of `s ↦ -1/(1-s²)` up to order three.
fn exponent_derivs(s: f64) -> [f64; 4] {
    let a = 1.0 - s * s;
    [
        -1.0 / a,
        -2.0 * s / (a * a),
        -2.0 / (a * a) - 8.0 * s * s / (a * a * a),
        -24.0 * s / (a * a * a) - 48.0 * s * s * s / (a * a * a * a),
    ]
}

fn maximize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, samples: usize) -> f64 {
    let step = (hi - lo) / samples as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..=samples {
        let v = f(lo + i as f64 * step);
        if v > best.1 {
            best = (i, v);
        }
    }
    let mut a = lo + best.0.saturating_sub(1) as f64 * step;
    let mut b = (lo + (best.0 + 1) as f64 * step).min(hi);
    let g = 0.5 * (math::sqrt(5.0) - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    best.1.max(fc).max(fd)
}

impl Mollifier {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            bail!(Domain, "dimension must be positive");
        }
        let r = BUMP_RADIUS;
        let radial = quad::adaptive(
            |t| {
                let s = t / r;
                if s >= 1.0 {
                    0.0
                } else {
                    math::exp(-1.0 / (1.0 - s * s)) * math::powi(t, n as i32 - 1)
                }
            },
            0.0,
            r,
            1e-18,
            1e-14,
        )?;
        let c_norm = 1.0 / (math::sphere_area(n) * radial);
        let mut m = Self {
            n,
            c_norm,
            norms: [0.0; 4],
        };
        let hi = r * (1.0 - 1e-9);
        let samples = 20_000;
        m.norms[0] = m.radial(0.0)[0];
        m.norms[1] = maximize(|t| m.radial(t)[1].abs(), 0.0, hi, samples);
        let radial2 = maximize(|t| m.radial(t)[2].abs(), 0.0, hi, samples);
        let tangential = maximize(|t| m.tangential(t).abs(), 0.0, hi, samples);
        m.norms[2] = radial2.max(tangential);
        m.norms[3] = maximize(|t| m.radial(t)[3].abs(), 0.0, hi, samples);
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn c_norm(&self) -> f64 {
        self.c_norm
    }

    /// `‖ϱ‖_{k,∞}` for `k ≤ 3`: the sup of `|ϱ|`, `|∇ϱ|`, the spectral norm of
    /// `∇²ϱ` and the radial third derivative.
    pub fn norm(&self, k: usize) -> f64 {
        self.norms[k.min(3)]
    }

    /// Radial profile `g(r)` and its first three derivatives in `r`.
    pub fn radial(&self, r: f64) -> [f64; 4] {
        let s = r / BUMP_RADIUS;
        if s.abs() >= 1.0 {
            return [0.0; 4];
        }
        let [u, u1, u2, u3] = exponent_derivs(s);
        let (u1, u2, u3) = (
            u1 / BUMP_RADIUS,
            u2 / (BUMP_RADIUS * BUMP_RADIUS),
            u3 / math::powi(BUMP_RADIUS, 3),
        );
        let g = self.c_norm * math::exp(u);
        [
            g,
            g * u1,
            g * (u1 * u1 + u2),
            g * (u1 * u1 * u1 + 3.0 * u1 * u2 + u3),
        ]
    }

    /// The Hessian eigenvalue `g'(r)/r` in directions tangent to the sphere.
    fn tangential(&self, r: f64) -> f64 {
        if r < 1e-12 {
            self.radial(0.0)[2]
        } else {
            self.radial(r)[1] / r
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.radial(math::norm(x))[0]
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let r = math::norm(x);
        let g1 = if r > 0.0 { self.radial(r)[1] / r } else { 0.0 };
        for (o, xi) in out.iter_mut().zip(x) {
            *o = g1 * xi;
        }
    }

    /// `ϱ_λ(x) = λ^{-n} ϱ((x - c)/λ)` with `λ` the side of `cube`.
    pub fn scaled_value(&self, cube: &Cube, x: &[f64]) -> f64 {
        let lam = cube.side;
        let r = math::dist(x, &cube.center) / lam;
        self.radial(r)[0] / math::powi(lam, self.n as i32)
    }

    /// `∫_{-∞}^t ϱ` for the one-dimensional bump.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        if self.n != 1 {
            bail!(Domain, "cumulative profile needs the one-dimensional bump");
        }
        if t <= -BUMP_RADIUS {
            return Ok(0.0);
        }
        if t >= BUMP_RADIUS {
            return Ok(1.0);
        }
        quad::adaptive(|s| self.radial(s)[0], -BUMP_RADIUS, t, 1e-16, 1e-13)
    }
}

/// The open cube `center + (-side/2, side/2)^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    center: Vec<f64>,
    side: f64,
}

impl Cube {
    pub fn new(center: &[f64], side: f64) -> Result<Self> {
        if center.is_empty() {
            bail!(Shape, "cube needs at least one coordinate");
        }
        if !(side > 0.0) || !side.is_finite() {
            bail!(Domain, "cube side must be positive, got {side}");
        }
        Ok(Self {
            center: center.to_vec(),
            side,
        })
    }

    /// `(-½, ½)^n`.
    pub fn unit(n: usize) -> Self {
        Self {
            center: vec![0.0; n],
            side: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - 0.5 * self.side).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .all(|(a, c)| (a - c).abs() < 0.5 * self.side)
    }

    /// The concentric cube with side `factor * side`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.center, factor * self.side)
    }
}

/// The kernel `k(x, y)` of `B` for a cube and an inner quadrature rule.
#[derive(Debug, Clone)]
pub struct BogovskiiKernel<'a> {
    mollifier: &'a Mollifier,
    cube: Cube,
    rule: GaussLegendre,
}

impl<'a> BogovskiiKernel<'a> {
    pub fn new(mollifier: &'a Mollifier, cube: &Cube, m: usize) -> Result<Self> {
        if m < 4 {
            bail!(Domain, "inner quadrature order must be at least 4, got {m}");
        }
        if mollifier.dim() != cube.dim() {
            bail!(
                Shape,
                "mollifier is {}-dimensional but the cube is {}-dimensional",
                mollifier.dim(),
                cube.dim()
            );
        }
        Ok(Self {
            mollifier,
            cube: cube.clone(),
            rule: GaussLegendre::new(m),
        })
    }

    /// Writes `k(x, y)` into `out`; zero when `x = y`.
    pub fn eval(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = x.len();
        let d = math::dist(x, y);
        out.iter_mut().for_each(|o| *o = 0.0);
        if d == 0.0 {
            return;
        }
        let lam = self.cube.side;
        let rho = BUMP_RADIUS * lam;
        // chord of y + ξ e with the ball |· - c| < ρ
        let mut b = 0.0;
        let mut w2 = 0.0;
        for i in 0..n {
            let w = y[i] - self.cube.center[i];
            b += w * (x[i] - y[i]) / d;
            w2 += w * w;
        }
        let q = w2 - rho * rho;
        let disc = b * b - q;
        if disc <= 0.0 {
            return;
        }
        let sq = math::sqrt(disc);
        let lo = (-b - sq).max(d);
        let hi = -b + sq;
        if hi <= lo {
            return;
        }
        let scale = self.mollifier.c_norm / math::powi(lam, n as i32);
        let inner = self.rule.integrate(lo, hi, |xi| {
            let s2 = (w2 + 2.0 * xi * b + xi * xi) / (rho * rho);
            if s2 >= 1.0 {
                0.0
            } else {
                scale * math::exp(-1.0 / (1.0 - s2)) * math::powi(xi, n as i32 - 1)
            }
        });
        let factor = inner / math::powi(d, n as i32);
        for i in 0..n {
            out[i] = (x[i] - y[i]) * factor;
        }
    }
}

/// `v = Bf` together with its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BogovskiiSolution {
    pub f: Field,
    pub cube: Cube,
    pub v: Field,
    pub inner_order: usize,
    /// Whether the mean of `f` was subtracted before applying `B`.
    pub projected: bool,
}

/// Relative mean tolerance for the mean-zero precondition.
pub const MEAN_TOLERANCE: f64 = 1e-10;

/// Applies `B` to one scalar field; see [`bogovskii_apply_batch`].
pub fn bogovskii_apply(
    mollifier: &Mollifier,
    f: &Field,
    cube: &Cube,
    m: usize,
    project_mean: bool,
) -> Result<BogovskiiSolution> {
    let mut out =
        bogovskii_apply_batch(mollifier, core::slice::from_ref(f), cube, m, project_mean)?;
    Ok(out.remove(0))
}

/// Applies `B` to several scalar fields on one grid, evaluating each kernel
/// value once. Values of `f` at grid points outside the cube are ignored and
/// `Bf` is zero there. A nonzero mean is an error unless `project_mean`.
pub fn bogovskii_apply_batch(
    mollifier: &Mollifier,
    fs: &[Field],
    cube: &Cube,
    m: usize,
    project_mean: bool,
) -> Result<Vec<BogovskiiSolution>> {
    let kernel = BogovskiiKernel::new(mollifier, cube, m)?;
    let Some(first) = fs.first() else {
        return Ok(Vec::new());
    };
    let g = first.grid().clone();
    let n = g.dim();
    if n != cube.dim() {
        bail!(
            Shape,
            "grid is {n}-dimensional but the cube is {}-dimensional",
            cube.dim()
        );
    }
    for f in fs {
        if f.rank() != Rank::Scalar {
            bail!(Shape, "Bogovskii operator needs scalar fields");
        }
        if f.grid() != &g {
            bail!(Shape, "all fields in a batch must share one grid");
        }
    }
    let inside: Vec<usize> = (0..g.len())
        .filter(|&i| cube.contains(&g.point(i)))
        .collect();
    let vol = g.cell_volume();
    let nf = fs.len();
    // f values restricted to the cube, point-major
    let mut fv = vec![0.0; inside.len() * nf];
    let mut projected = vec![false; nf];
    for (j, f) in fs.iter().enumerate() {
        let mean: f64 = inside.iter().map(|&i| f.values()[i]).sum::<f64>() * vol;
        let l1: f64 = inside.iter().map(|&i| f.values()[i].abs()).sum::<f64>() * vol;
        let shift = if mean.abs() > MEAN_TOLERANCE * l1 {
            if !project_mean {
                bail!(
                    Precondition,
                    "f has mean {mean:e} over the cube (L1 norm {l1:e}); B needs mean zero"
                );
            }
            projected[j] = true;
            mean / (inside.len() as f64 * vol)
        } else {
            0.0
        };
        for (a, &i) in inside.iter().enumerate() {
            fv[a * nf + j] = f.values()[i] - shift;
        }
    }
    let pts: Vec<Vec<f64>> = inside.iter().map(|&i| g.point(i)).collect();
    let mut out: Vec<Field> = (0..nf)
        .map(|_| Field::zeros(g.clone(), Rank::Vector))
        .collect();
    let mut k = vec![0.0; n];
    let mut acc = vec![0.0; n * nf];
    for (a, &xi) in inside.iter().enumerate() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        let x = &pts[a];
        for (b, y) in pts.iter().enumerate() {
            if a == b {
                continue;
            }
            kernel.eval(x, y, &mut k);
            if k.iter().all(|&c| c == 0.0) {
                continue;
            }
            for j in 0..nf {
                let fy = fv[b * nf + j];
                for c in 0..n {
                    acc[j * n + c] += fy * k[c];
                }
            }
        }
        for j in 0..nf {
            for c in 0..n {
                out[j].at_mut(xi)[c] = acc[j * n + c] * vol;
            }
        }
    }
    Ok(out
        .into_iter()
        .zip(fs)
        .zip(projected)
        .map(|((v, f), projected)| BogovskiiSolution {
            f: f.clone(),
            cube: cube.clone(),
            v,
            inner_order: m,
            projected,
        })
        .collect())
}

/// Residual of `div Bf = f` on grid points inside the cube whose centered
/// stencils stay on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivResidual {
    /// `‖div Bf - f‖₂ / ‖f‖₂`, absent when `f = 0`.
    pub l2_rel: Option<f64>,
    pub l2_abs: f64,
    pub linf: f64,
}

pub fn divergence_residual(sol: &BogovskiiSolution) -> Result<DivResidual> {
    let div = grid::divergence(&sol.v)?;
    let g = sol.v.grid();
    let vol = g.cell_volume();
    let (mut r2, mut f2, mut linf) = (0.0, 0.0, 0.0f64);
    for i in 0..g.len() {
        if !grid::is_inner(g, i, 1) || !sol.cube.contains(&g.point(i)) {
            continue;
        }
        let f = sol.f.values()[i];
        let r = div.values()[i] - f;
        r2 += r * r * vol;
        f2 += f * f * vol;
        linf = linf.max(r.abs());
    }
    Ok(DivResidual {
        l2_rel: if f2 > 0.0 {
            Some(math::sqrt(r2 / f2))
        } else {
            None
        },
        l2_abs: math::sqrt(r2),
        linf,
    })
}

/// `‖∇Bf‖_{L^p_ω} / ‖f‖_{L^p_ω}` with `∇Bf` by grid differences.
pub fn gradient_bound_ratio(
    sol: &BogovskiiSolution,
    p: f64,
    weight: Option<&[f64]>,
) -> Result<f64> {
    let den = sol.f.lp_norm(p, weight);
    if !(den > 0.0) {
        bail!(Precondition, "f has zero norm");
    }
    Ok(grid::gradient(&sol.v)?.lp_norm(p, weight) / den)
}

fn pointwise_norms(field: &Field) -> Vec<f64> {
    (0..field.grid().len()).map(|i| field.norm_at(i)).collect()
}

/// The two sides of the difference-quotient bound for one axis and sign:
/// `|d^±_{h,k} ∇Bf|` and `|d⁺_{h,k} f| + |d⁻_{h,k} f| + |f|/ℓ(Q)`, pointwise.
fn dq_sides(
    sol: &BogovskiiSolution,
    grad: &Field,
    h: f64,
    k: usize,
    sign: Sign,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let lhs = pointwise_norms(&grid::diff_quot(grad, k, h, sign)?);
    let dp = grid::diff_quot(&sol.f, k, h, Sign::Plus)?;
    let dm = grid::diff_quot(&sol.f, k, h, Sign::Minus)?;
    let ell = sol.cube.side();
    let rhs = (0..sol.f.len())
        .map(|i| dp.values()[i].abs() + dm.values()[i].abs() + sol.f.values()[i].abs() / ell)
        .collect();
    Ok((lhs, rhs))
}

fn weighted_lp(values: &[f64], p: f64, weight: Option<&[f64]>, vol: f64) -> f64 {
    let s: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| math::powf(v.abs(), p) * weight.map_or(1.0, |w| w[i]))
        .sum();
    math::powf(s * vol, 1.0 / p)
}

fn modular_of(nf: &dyn NFunction, values: &[f64], vol: f64) -> f64 {
    values.iter().map(|v| nf.value(v.abs())).sum::<f64>() * vol
}

/// Difference-quotient bound ratios for one shift `h`, per axis and sign.
#[derive(Debug, Clone, PartialEq)]
pub struct DqBoundRatio {
    pub h: f64,
    /// `(k, sign, LHS / RHS)`.
    pub entries: Vec<(usize, Sign, f64)>,
}

impl DqBoundRatio {
    pub fn max(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.2))
    }
}

/// `‖d^±_{h,k}∇Bf‖_{L^p_ω} / ‖ |d⁺_{h,k}f| + |d⁻_{h,k}f| + |f|/ℓ(Q) ‖_{L^p_ω}`
/// for every axis and both signs, with `f` and `Bf` extended by zero.
pub fn diffquot_bound_ratio(
    sol: &BogovskiiSolution,
    p: f64,
    weight: Option<&[f64]>,
    h: f64,
) -> Result<DqBoundRatio> {
    let grad = grid::gradient(&sol.v)?;
    let vol = sol.v.grid().cell_volume();
    let mut entries = Vec::new();
    for k in 0..sol.v.grid().dim() {
        for sign in [Sign::Plus, Sign::Minus] {
            let (lhs, rhs) = dq_sides(sol, &grad, h, k, sign)?;
            let den = weighted_lp(&rhs, p, weight, vol);
            if !(den > 0.0) {
                bail!(Precondition, "right-hand side has zero norm");
            }
            entries.push((k, sign, weighted_lp(&lhs, p, weight, vol) / den));
        }
    }
    Ok(DqBoundRatio { h, entries })
}

/// Modular forms of the gradient and difference-quotient bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct OrliczBoundRatios {
    /// `ρ_φ(∇Bf) / ρ_φ(f)`.
    pub gradient: f64,
    /// `max_{k,±} ρ_φ(d^±_{h,k}∇Bf) / ρ_φ(|d⁺f| + |d⁻f| + |f|/ℓ(Q))`.
    pub diffquot: f64,
}

pub fn orlicz_bound_ratios<N: NFunction>(
    sol: &BogovskiiSolution,
    nf: &N,
    h: f64,
) -> Result<OrliczBoundRatios> {
    let vol = sol.v.grid().cell_volume();
    let grad = grid::gradient(&sol.v)?;
    let den = modular_of(nf, &pointwise_norms(&sol.f), vol);
    if !(den > 0.0) {
        bail!(Precondition, "f has zero modular");
    }
    let gradient = modular_of(nf, &pointwise_norms(&grad), vol) / den;
    let mut diffquot: f64 = 0.0;
    for k in 0..sol.v.grid().dim() {
        for sign in [Sign::Plus, Sign::Minus] {
            let (lhs, rhs) = dq_sides(sol, &grad, h, k, sign)?;
            diffquot = diffquot.max(modular_of(nf, &lhs, vol) / modular_of(nf, &rhs, vol));
        }
    }
    Ok(OrliczBoundRatios { gradient, diffquot })
}

/// Sampled second differences of the bump against `‖∇²ϱ‖_∞ |w| |a - b|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondDiffReport {
    pub max_ratio: f64,
    pub samples: usize,
    /// Triples with `w = 0` or `a = b`, where both sides vanish.
    pub skipped: usize,
}

/// Evaluates `|ϱ(a) - ϱ(a+w) - ϱ(b) + ϱ(b+w)| / (‖∇²ϱ‖_∞ |w| |a-b|)` on
/// random triples with `a, b` in `(-¼, ¼)^n` and `|w_i| < ¼`.
pub fn second_difference_bound_check<R: Rng + ?Sized>(
    mollifier: &Mollifier,
    rng: &mut R,
    samples: usize,
) -> SecondDiffReport {
    let n = mollifier.dim();
    let hess = mollifier.norm(2);
    let mut report = SecondDiffReport {
        max_ratio: 0.0,
        samples,
        skipped: 0,
    };
    let mut aw = vec![0.0; n];
    let mut bw = vec![0.0; n];
    for _ in 0..samples {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.25..0.25)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.25..0.25)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.25..0.25)).collect();
        let rhs = hess * math::norm(&w) * math::dist(&a, &b);
        if rhs == 0.0 {
            report.skipped += 1;
            continue;
        }
        for i in 0..n {
            aw[i] = a[i] + w[i];
            bw[i] = b[i] + w[i];
        }
        let lhs = (mollifier.value(&a) - mollifier.value(&aw) - mollifier.value(&b)
            + mollifier.value(&bw))
        .abs();
        report.max_ratio = report.max_ratio.max(lhs / rhs);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UniformGrid;
    use crate::nfunc::NFunctionPD;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bump_support_peak_and_mass() {
        for n in 1..=3 {
            let m = Mollifier::new(n).unwrap();
            let mut x = vec![0.0; n];
            x[0] = BUMP_RADIUS;
            assert_eq!(m.value(&x), 0.0);
            x[0] = 0.1;
            assert!(m.value(&vec![0.0; n]) > m.value(&x));
        }
        let m = Mollifier::new(2).unwrap();
        // midpoint sums converge fast for smooth compactly supported functions
        for cells in [200usize, 400] {
            let g = UniformGrid::cell_centered(&[-0.25, -0.25], 0.5, cells).unwrap();
            let total = Field::scalar_from_fn(g, |x| m.value(x)).integral()[0];
            assert!((total - 1.0).abs() < 1e-8, "{total}");
        }
    }

    #[test]
    fn radial_derivatives_match_differences() {
        let m = Mollifier::new(2).unwrap();
        let e = 1e-6;
        for r in [0.03, 0.08, 0.12, 0.17] {
            let d = m.radial(r);
            for k in 0..3 {
                let fd = (m.radial(r + e)[k] - m.radial(r - e)[k]) / (2.0 * e);
                assert!(
                    (fd - d[k + 1]).abs() < 1e-5 * d[k + 1].abs().max(1.0),
                    "k={k} r={r}"
                );
            }
        }
    }

    #[test]
    fn hessian_norm_bounds_sampled_hessians() {
        let m = Mollifier::new(2).unwrap();
        let e = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..2000 {
            let x = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
            let mut h = [[0.0; 2]; 2];
            for i in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += e;
                xm[i] -= e;
                let mut gp = [0.0; 2];
                let mut gm = [0.0; 2];
                m.gradient(&xp, &mut gp);
                m.gradient(&xm, &mut gm);
                for j in 0..2 {
                    h[i][j] = (gp[j] - gm[j]) / (2.0 * e);
                }
            }
            let tr = h[0][0] + h[1][1];
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let disc = math::sqrt((0.25 * tr * tr - det).max(0.0));
            worst = worst.max((0.5 * tr).abs() + disc);
        }
        assert!(worst <= m.norm(2) * (1.0 + 1e-4));
        assert!(worst >= 0.8 * m.norm(2));
    }

    fn antiderivative_oracle(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        quad::adaptive(f, -0.5, x, 1e-14, 1e-12).unwrap()
    }

    #[test]
    fn one_dimensional_solution_is_the_antiderivative() {
        let m = Mollifier::new(1).unwrap();
        let g = UniformGrid::cell_centered(&[-0.5], 1.0, 256).unwrap();
        let tau = 2.0 * core::f64::consts::PI;
        let f = Field::scalar_from_fn(g.clone(), |x| math::sin(tau * x[0]));
        let sol = bogovskii_apply(&m, &f, &Cube::unit(1), 16, false).unwrap();
        let mut err: f64 = 0.0;
        for i in 0..g.len() {
            let x = g.point(i)[0];
            err = err
                .max((sol.v.values()[i] - antiderivative_oracle(|s| math::sin(tau * s), x)).abs());
        }
        assert!(err < 4e-3, "{err}");
    }

    #[test]
    fn zero_input_linearity_and_support() {
        let m = Mollifier::new(2).unwrap();
        let g = UniformGrid::cell_centered(&[-0.5, -0.5], 1.0, 12).unwrap();
        let f = Field::scalar_from_fn(g.clone(), |x| {
            x[0] * math::exp(-10.0 * (x[0] * x[0] + x[1] * x[1]))
        });
        let k = Field::scalar_from_fn(g.clone(), |x| x[1] * x[0] * x[0]);
        let z = Field::zeros(g.clone(), Rank::Scalar);
        let comb = f.axpby(2.0, &k, -3.0).unwrap();
        let sols = bogovskii_apply_batch(&m, &[f, k, z, comb], &Cube::unit(2), 8, false).unwrap();
        assert_eq!(sols[2].v.max_abs(), 0.0);
        let lin = sols[0].v.axpby(2.0, &sols[1].v, -3.0).unwrap();
        let diff = lin.axpby(1.0, &sols[3].v, -1.0).unwrap().max_abs();
        assert!(diff < 1e-12 * lin.max_abs());
        // exterior points see no kernel mass
        let kern = BogovskiiKernel::new(&m, &Cube::unit(2), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut out = [0.0; 2];
        for _ in 0..2000 {
            let x = [rng.gen_range(0.5..1.5), rng.gen_range(-1.5..1.5)];
            let y = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            kern.eval(&x, &y, &mut out);
            assert_eq!(out, [0.0, 0.0]);
        }
    }

    #[test]
    fn nonzero_mean_is_rejected_unless_projected() {
        let m = Mollifier::new(1).unwrap();
        let g = UniformGrid::cell_centered(&[-0.5], 1.0, 32).unwrap();
        let f = Field::scalar_from_fn(g, |x| 1.0 + x[0]);
        assert!(bogovskii_apply(&m, &f, &Cube::unit(1), 8, false).is_err());
        let sol = bogovskii_apply(&m, &f, &Cube::unit(1), 8, true).unwrap();
        assert!(sol.projected);
        assert!(bogovskii_apply(&m, &f, &Cube::unit(1), 3, true).is_err());
    }

    #[test]
    fn translation_equivariance() {
        let m = Mollifier::new(2).unwrap();
        let bump = |x: &[f64], c: &[f64]| {
            let (a, b) = (x[0] - c[0], x[1] - c[1]);
            a * math::exp(-12.0 * (a * a + b * b))
        };
        let g0 = UniformGrid::cell_centered(&[-0.5, -0.5], 1.0, 10).unwrap();
        let g1 = UniformGrid::cell_centered(&[1.5, -2.5], 1.0, 10).unwrap();
        let f0 = Field::scalar_from_fn(g0, |x| bump(x, &[0.0, 0.0]));
        let f1 = Field::scalar_from_fn(g1, |x| bump(x, &[2.0, -2.0]));
        let s0 = bogovskii_apply(&m, &f0, &Cube::unit(2), 8, true).unwrap();
        let s1 = bogovskii_apply(&m, &f1, &Cube::new(&[2.0, -2.0], 1.0).unwrap(), 8, true).unwrap();
        let d =
            s0.v.values()
                .iter()
                .zip(s1.v.values())
                .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        assert!(d < 1e-10 * s0.v.max_abs(), "{d}");
    }

    #[test]
    fn second_differences_respect_the_hessian_bound() {
        let m = Mollifier::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = second_difference_bound_check(&m, &mut rng, 20_000);
        assert!(r.max_ratio > 0.0 && r.max_ratio <= 1.0 + 1e-6, "{r:?}");
    }

    #[test]
    fn ratios_on_a_small_grid() {
        let m = Mollifier::new(2).unwrap();
        let g = UniformGrid::cell_centered(&[-0.5, -0.5], 1.0, 16).unwrap();
        let f = Field::scalar_from_fn(g, |x| x[0] * math::exp(-20.0 * (x[0] * x[0] + x[1] * x[1])));
        let sol = bogovskii_apply(&m, &f, &Cube::unit(2), 8, false).unwrap();
        let r = gradient_bound_ratio(&sol, 2.0, None).unwrap();
        assert!(r.is_finite() && r > 0.0);
        let dq = diffquot_bound_ratio(&sol, 2.0, None, 2.0 / 16.0).unwrap();
        assert_eq!(dq.entries.len(), 4);
        assert!(dq.max().is_finite());
        // p = 2, δ = 0 modulars are half squared norms
        let nf = NFunctionPD::new(2.0, 0.0).unwrap();
        let o = orlicz_bound_ratios(&sol, &nf, 2.0 / 16.0).unwrap();
        assert!((o.gradient - r * r).abs() < 1e-12 * r * r);
        let div = divergence_residual(&sol).unwrap();
        assert!(div.l2_rel.unwrap() < 1.0);
    }
}
