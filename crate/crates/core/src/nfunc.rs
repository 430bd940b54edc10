//! N-function calculus for the power-law family
//! `φ_{p,δ}(t) = ∫₀ᵗ (δ+s)^{p-2} s ds`, its shifts and conjugates,
//! Orlicz modulars, Luxemburg norms and Young-type inequalities.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{bail, Error, Result};
use crate::grid::Field;
use crate::math;

/// An N-function evaluated on `[0, ∞)`.
///
/// `value` and `derivative` assume a nonnegative argument; the checked
/// entry points live on the concrete types.
pub trait NFunction {
    fn value(&self, t: f64) -> f64;
    fn derivative(&self, t: f64) -> f64;
    fn label(&self) -> String;
}

impl<T: NFunction + ?Sized> NFunction for &T {
    fn value(&self, t: f64) -> f64 {
        (**self).value(t)
    }
    fn derivative(&self, t: f64) -> f64 {
        (**self).derivative(t)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

/// `φ_{p,δ}` with `p > 1`, `δ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NFunctionPD {
    p: f64,
    delta: f64,
}

fn check_arg(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        bail!(
            Domain,
            "argument must be a finite nonnegative number, got {t}"
        );
    }
    Ok(())
}

impl NFunctionPD {
    pub fn new(p: f64, delta: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            bail!(Domain, "exponent p must lie in (1, inf), got {p}");
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            bail!(
                Domain,
                "shift delta must be finite and nonnegative, got {delta}"
            );
        }
        Ok(Self { p, delta })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Conjugate exponent `p' = p / (p - 1)`.
    pub fn p_conj(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// `φ(t)`; errs for negative `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        check_arg(t)?;
        Ok(self.phi(t))
    }

    /// `φ'(t) = (δ+t)^{p-2} t`.
    pub fn prime(&self, t: f64) -> Result<f64> {
        check_arg(t)?;
        Ok(self.phi_prime(t))
    }

    /// `φ''(t) = (δ+t)^{p-3} ((p-1) t + δ)`.
    ///
    /// Unbounded at `t = 0` when `δ = 0` and `p < 2`; callers needing the
    /// product `φ''(t) t` should use [`Self::second_weighted`].
    pub fn second(&self, t: f64) -> Result<f64> {
        check_arg(t)?;
        let (p, d) = (self.p, self.delta);
        if d + t == 0.0 {
            if p < 2.0 {
                bail!(
                    Singular,
                    "phi''(0) is unbounded for delta = 0 and p = {p} < 2; use the product phi''(t) t"
                );
            }
            return Ok(if p == 2.0 { 1.0 } else { 0.0 });
        }
        Ok(math::powf(d + t, p - 3.0) * ((p - 1.0) * t + d))
    }

    /// `φ''(a) w²`, extended by zero when `w = 0`.
    ///
    /// Needs `a ≥ w` or `δ > 0` for the product to be bounded, which holds for
    /// every use of the form `φ''(|P| + |P-Q|) |P-Q|²`.
    pub fn second_weighted(&self, a: f64, w: f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        let (p, d) = (self.p, self.delta);
        math::powf(d + a, p - 3.0) * ((p - 1.0) * a + d) * w * w
    }

    fn phi(&self, t: f64) -> f64 {
        let (p, d) = (self.p, self.delta);
        if t == 0.0 {
            return 0.0;
        }
        if d == 0.0 {
            return math::powf(t, p) / p;
        }
        let x = t / d;
        if x < 0.5 {
            // δ^p Σ_k C(p-2, k) x^{k+2} / (k+2)
            let alpha = p - 2.0;
            let mut coeff = 1.0;
            let mut xp = x * x;
            let mut sum = 0.0;
            for k in 0..200 {
                let term = coeff * xp / (k as f64 + 2.0);
                sum += term;
                if term.abs() <= 1e-18 * sum.abs() {
                    break;
                }
                coeff *= (alpha - k as f64) / (k as f64 + 1.0);
                xp *= x;
            }
            return math::powf(d, p) * sum;
        }
        let s = d + t;
        (math::powf(s, p) - math::powf(d, p)) / p
            - d * (math::powf(s, p - 1.0) - math::powf(d, p - 1.0)) / (p - 1.0)
    }

    fn phi_prime(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        math::powf(self.delta + t, self.p - 2.0) * t
    }

    /// The shifted function `φ_a`.
    pub fn shifted(&self, a: f64) -> Result<ShiftedNFunction> {
        ShiftedNFunction::new(*self, a)
    }

    /// Inverse of `φ'` by monotone bisection.
    pub fn prime_inverse(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut guard = 0;
        while self.phi_prime(hi) < s {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 2100 || !hi.is_finite() {
                bail!(
                    Numerical,
                    "could not bracket (phi')^-1({s}): phi' stays below target"
                );
            }
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.phi_prime(mid) < s {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        let t = 0.5 * (lo + hi);
        let resid = (self.phi_prime(t) - s).abs();
        if !(resid <= 1e-10 * s.max(f64::MIN_POSITIVE)) {
            return Err(Error::Numerical(format!(
                "bisection for (phi')^-1({s}) stalled at t = {t} with residual {resid:e}"
            )));
        }
        Ok(t)
    }

    /// `φ*(s) = sup_t (s t - φ(t))`.
    pub fn conjugate(&self, s: f64) -> Result<f64> {
        let t = self.prime_inverse(s)?;
        Ok((s * t - self.phi(t)).max(0.0))
    }

    /// The conjugate as an [`NFunction`].
    pub fn conjugate_fn(&self) -> Conjugate {
        Conjugate(*self)
    }

    /// Extreme values of `φ''(t) t / φ'(t)` and `φ'(t) t / φ(t)` over a
    /// logarithmic grid on `[1e-6, 1e6]`.
    pub fn equivalence_ratios(&self) -> EquivalenceRatios {
        let mut r = EquivalenceRatios {
            second_min: f64::INFINITY,
            second_max: 0.0,
            first_min: f64::INFINITY,
            first_max: 0.0,
        };
        for t in log_grid(1e-6, 1e6, 100) {
            let a = self.second_weighted(t, 1.0) * t / self.phi_prime(t);
            let b = self.phi_prime(t) * t / self.phi(t);
            r.second_min = r.second_min.min(a);
            r.second_max = r.second_max.max(a);
            r.first_min = r.first_min.min(b);
            r.first_max = r.first_max.max(b);
        }
        r
    }
}

impl NFunction for NFunctionPD {
    fn value(&self, t: f64) -> f64 {
        self.phi(t)
    }
    fn derivative(&self, t: f64) -> f64 {
        self.phi_prime(t)
    }
    fn label(&self) -> String {
        format!("phi[p={},delta={}]", self.p, self.delta)
    }
}

/// Sampled bounds of the two standard equivalences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceRatios {
    pub second_min: f64,
    pub second_max: f64,
    pub first_min: f64,
    pub first_max: f64,
}

impl EquivalenceRatios {
    /// Smallest `C` with every sampled ratio in `[1/C, C]`.
    pub fn constant(&self) -> f64 {
        [
            self.second_max,
            1.0 / self.second_min,
            self.first_max,
            1.0 / self.first_min,
        ]
        .into_iter()
        .fold(1.0, f64::max)
    }
}

/// The shifted N-function `φ_a(t) = ∫₀ᵗ φ'(a+s) s / (a+s) ds`.
///
/// For the power-law family this is `φ_{p,δ+a}`, which is how it is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedNFunction {
    base: NFunctionPD,
    a: f64,
    collapsed: NFunctionPD,
}

impl ShiftedNFunction {
    pub fn new(base: NFunctionPD, a: f64) -> Result<Self> {
        check_arg(a)?;
        let collapsed = NFunctionPD::new(base.p, base.delta + a)?;
        Ok(Self { base, a, collapsed })
    }

    pub fn base(&self) -> NFunctionPD {
        self.base
    }

    pub fn shift(&self) -> f64 {
        self.a
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.collapsed.eval(t)
    }

    pub fn prime(&self, t: f64) -> Result<f64> {
        self.collapsed.prime(t)
    }
}

impl NFunction for ShiftedNFunction {
    fn value(&self, t: f64) -> f64 {
        self.collapsed.phi(t)
    }
    fn derivative(&self, t: f64) -> f64 {
        self.collapsed.phi_prime(t)
    }
    fn label(&self) -> String {
        format!(
            "phi_a[p={},delta={},a={}]",
            self.base.p, self.base.delta, self.a
        )
    }
}

/// The conjugate `φ*` of a power-law N-function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conjugate(pub NFunctionPD);

impl NFunction for Conjugate {
    fn value(&self, s: f64) -> f64 {
        self.0.conjugate(s).unwrap_or(f64::NAN)
    }
    fn derivative(&self, s: f64) -> f64 {
        self.0.prime_inverse(s).unwrap_or(f64::NAN)
    }
    fn label(&self) -> String {
        format!("phi*[p={},delta={}]", self.0.p, self.0.delta)
    }
}

/// `n_per_decade` logarithmically spaced points in `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, n_per_decade: usize) -> Vec<f64> {
    let decades = math::log2(hi / lo) / math::log2(10.0);
    let count = (math::ceil(decades * n_per_decade as f64) as usize).max(1);
    let (llo, lhi) = (math::ln(lo), math::ln(hi));
    (0..=count)
        .map(|i| math::exp(llo + (lhi - llo) * i as f64 / count as f64))
        .collect()
}

/// `sup ψ(2t)/ψ(t)` over a logarithmic grid on `[1e-6, 1e6]`.
///
/// This is a lower bound of the Δ₂ constant.
pub fn delta2_estimate<N: NFunction + ?Sized>(psi: &N) -> f64 {
    log_grid(1e-6, 1e6, 100)
        .into_iter()
        .map(|t| psi.value(2.0 * t) / psi.value(t))
        .filter(|r| r.is_finite())
        .fold(0.0, f64::max)
}

/// Result of evaluating an Orlicz modular on a grid field.
#[derive(Debug, Clone, PartialEq)]
pub struct ModularReport {
    pub value: f64,
    pub grid_spacing: f64,
    pub function_id: String,
}

/// `Σ_x ψ(|field(x)|) h^n`, with `|·|` the Euclidean norm over components.
pub fn modular<N: NFunction + ?Sized>(psi: &N, field: &Field) -> Result<ModularReport> {
    if field.is_empty() {
        bail!(Shape, "modular of an empty field");
    }
    let value = modular_scaled(psi, field, 1.0);
    Ok(ModularReport {
        value,
        grid_spacing: field.grid().spacing(),
        function_id: psi.label(),
    })
}

fn modular_scaled<N: NFunction + ?Sized>(psi: &N, field: &Field, scale: f64) -> f64 {
    let vol = field.grid().cell_volume();
    (0..field.len())
        .map(|i| psi.value(field.norm_at(i) * scale))
        .sum::<f64>()
        * vol
}

/// Luxemburg norm `inf { λ > 0 : ρ_ψ(field/λ) ≤ 1 }` by bisection
/// (relative tolerance 1e-8). Returns the upper end, so the modular of
/// `field/λ` never exceeds one.
pub fn luxemburg_norm<N: NFunction + ?Sized>(psi: &N, field: &Field) -> Result<f64> {
    if field.is_empty() {
        bail!(Shape, "Luxemburg norm of an empty field");
    }
    let max = (0..field.len())
        .map(|i| field.norm_at(i))
        .fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(0.0);
    }
    let rho = |lambda: f64| modular_scaled(psi, field, 1.0 / lambda);
    let mut hi = max;
    while rho(hi) > 1.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            bail!(Numerical, "Luxemburg norm bracket overflowed");
        }
    }
    let mut lo = hi / 2.0;
    while rho(lo) <= 1.0 {
        hi = lo;
        lo /= 2.0;
        if lo == 0.0 {
            bail!(Numerical, "Luxemburg norm bracket underflowed");
        }
    }
    while hi - lo > 1e-8 * hi {
        let mid = 0.5 * (lo + hi);
        if rho(mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Outcome of checking both Young-type inequalities on a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct YoungReport {
    pub eps: f64,
    /// Constant for `ts ≤ ε ψ(t) + c ψ*(s)`.
    pub c_eps_conjugate: f64,
    /// Constant for `t ψ'(s) + ψ'(t) s ≤ ε ψ(t) + c ψ(s)`.
    pub c_eps_derivative: f64,
    pub samples: usize,
    pub violations_conjugate: usize,
    pub violations_derivative: usize,
}

impl YoungReport {
    pub fn pass(&self) -> bool {
        self.violations_conjugate == 0 && self.violations_derivative == 0
    }
}

fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (math::sqrt(5.0) - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximizes a function of `ln s` over `[ln lo, ln hi]`: dense grid, then
/// golden-section refinement around the best grid cell.
fn log_sup<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, per_decade: usize) -> f64 {
    let grid = log_grid(lo, hi, per_decade);
    let vals: Vec<f64> = grid.iter().map(|&s| f(s)).collect();
    let (best, mut sup) =
        vals.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    let a = math::ln(grid[best.saturating_sub(1)]);
    let b = math::ln(grid[(best + 1).min(grid.len() - 1)]);
    if b > a {
        let (_, v) = golden_max(|u| f(math::exp(u)), a, b, 80);
        sup = sup.max(v);
    }
    sup
}

/// Constant in `ts ≤ ε ψ(t) + c ψ*(s)` for `s ∈ [s_lo, s_hi]`, all `t ≥ 0`.
///
/// The inner supremum over `t` is exact (`ε ψ*(s/ε)`); the outer one is a
/// refined grid search in `s`.
pub fn young_constant_conjugate(nf: &NFunctionPD, eps: f64, s_lo: f64, s_hi: f64) -> Result<f64> {
    if !(eps > 0.0) {
        bail!(Domain, "eps must be positive, got {eps}");
    }
    let ratio = |s: f64| {
        let num = eps * nf.conjugate(s / eps).unwrap_or(f64::NAN);
        let den = nf.conjugate(s).unwrap_or(f64::NAN);
        num / den
    };
    let c = log_sup(ratio, s_lo, s_hi, 200);
    if !c.is_finite() {
        bail!(Numerical, "Young constant search produced {c}");
    }
    Ok(c.max(0.0))
}

/// Constant in `t ψ'(s) + ψ'(t) s ≤ ε ψ(t) + c ψ(s)` for `s ∈ [s_lo, s_hi]`,
/// all `t > 0`.
pub fn young_constant_derivative(nf: &NFunctionPD, eps: f64, s_lo: f64, s_hi: f64) -> Result<f64> {
    if !(eps > 0.0) {
        bail!(Domain, "eps must be positive, got {eps}");
    }
    let inner = |s: f64| {
        let ps = nf.phi_prime(s);
        let g = |t: f64| t * ps + nf.phi_prime(t) * s - eps * nf.phi(t);
        let sup = log_sup(g, s_lo.min(s) * 1e-6, s_hi.max(s) * 1e6, 20);
        sup / nf.phi(s)
    };
    let c = log_sup(inner, s_lo, s_hi, 100);
    if !c.is_finite() {
        bail!(Numerical, "Young constant search produced {c}");
    }
    Ok(c.max(0.0))
}

/// Computes both Young constants over the bounding box of `sample` and
/// checks both inequalities pointwise on the sample.
pub fn young_check(nf: &NFunctionPD, eps: f64, sample: &[(f64, f64)]) -> Result<YoungReport> {
    if !(eps > 0.0) {
        bail!(Domain, "eps must be positive, got {eps}");
    }
    for &(s, t) in sample {
        check_arg(s)?;
        check_arg(t)?;
    }
    let positive = sample.iter().map(|p| p.0).filter(|&s| s > 0.0);
    let s_lo = positive.clone().fold(f64::INFINITY, f64::min);
    let s_hi = positive.fold(0.0, f64::max);
    let (c1, c2) = if s_hi > 0.0 {
        (
            young_constant_conjugate(nf, eps, s_lo, s_hi)?,
            young_constant_derivative(nf, eps, s_lo, s_hi)?,
        )
    } else {
        (0.0, 0.0)
    };
    let tol = 1e-10;
    let mut v1 = 0;
    let mut v2 = 0;
    for &(s, t) in sample {
        let conj = nf.conjugate(s)?;
        let lhs1 = t * s;
        let rhs1 = eps * nf.phi(t) + c1 * conj;
        if (conj == 0.0 && lhs1 - eps * nf.phi(t) > 0.0) || lhs1 > rhs1 * (1.0 + tol) {
            v1 += 1;
        }
        let lhs2 = t * nf.phi_prime(s) + nf.phi_prime(t) * s;
        let rhs2 = eps * nf.phi(t) + c2 * nf.phi(s);
        if lhs2 > rhs2 * (1.0 + tol) {
            v2 += 1;
        }
    }
    Ok(YoungReport {
        eps,
        c_eps_conjugate: c1,
        c_eps_derivative: c2,
        samples: sample.len(),
        violations_conjugate: v1,
        violations_derivative: v2,
    })
}

/// `count` pairs `(s, t)` drawn log-uniformly from `[lo, hi]²`.
pub fn log_uniform_pairs<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    lo: f64,
    hi: f64,
) -> Vec<(f64, f64)> {
    let (a, b) = (math::ln(lo), math::ln(hi));
    (0..count)
        .map(|_| {
            (
                math::exp(rng.gen_range(a..=b)),
                math::exp(rng.gen_range(a..=b)),
            )
        })
        .collect()
}
