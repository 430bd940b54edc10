//! Power-law stress tensors with `(p,δ)`-structure, the associated field `F`,
//! and sampled checks of the equivalences linking `S`, `F` and the shifted
//! N-functions.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{bail, Result};
use crate::grid::{diff_quot, Field, Rank, Sign};
use crate::math;
use crate::nfunc::{NFunction, NFunctionPD};

/// A real `n×n` tensor, row-major. Not necessarily symmetric; see [`SymTensor::sym`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor {
    n: usize,
    entries: Vec<f64>,
}

impl SymTensor {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            bail!(
                Shape,
                "a {n}x{n} tensor needs {} entries, got {}",
                n * n,
                entries.len()
            );
        }
        Ok(Self { n, entries })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut t = Self::zeros(n);
        for (i, v) in d.iter().enumerate() {
            t.entries[i * n + i] = *v;
        }
        t
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Self {
        Self {
            n,
            entries: (0..n * n).map(|_| rng.gen_range(lo..hi)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// `(A + Aᵀ)/2`.
    pub fn sym(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.entries[i * n + j] = 0.5 * (self.entries[i * n + j] + self.entries[j * n + i]);
            }
        }
        out
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Frobenius norm `|A| = (A·A)^{1/2}`.
    pub fn norm(&self) -> f64 {
        math::norm(&self.entries)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|v| v * a).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|v| *v == 0.0)
    }
}

/// `S(P) = μ (δ + |P^sym|)^{p-2} P^sym`.
#[derive(Debug, Clone, PartialEq)]
pub struct StressModel {
    pub nf: NFunctionPD,
    pub mu: f64,
    pub gamma0_est: Option<f64>,
    pub gamma1_est: Option<f64>,
}

impl StressModel {
    pub fn new(nf: NFunctionPD, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            bail!(Domain, "viscosity factor mu must be positive, got {mu}");
        }
        Ok(Self {
            nf,
            mu,
            gamma0_est: None,
            gamma1_est: None,
        })
    }

    pub fn power_law(p: f64, delta: f64) -> Result<Self> {
        Self::new(NFunctionPD::new(p, delta)?, 1.0)
    }

    pub fn p(&self) -> f64 {
        self.nf.p()
    }

    pub fn delta(&self) -> f64 {
        self.nf.delta()
    }

    /// Scalar factor `μ (δ + t)^{p-2}` multiplying `P^sym` when `|P^sym| = t > 0`.
    #[inline]
    pub fn stress_factor(&self, t: f64) -> f64 {
        self.mu * math::powf(self.nf.delta() + t, self.nf.p() - 2.0)
    }

    /// Scalar factor `(δ + t)^{(p-2)/2}` of the associated field.
    #[inline]
    pub fn f_factor(&self, t: f64) -> f64 {
        math::powf(self.nf.delta() + t, 0.5 * (self.nf.p() - 2.0))
    }

    pub fn stress(&self, p: &SymTensor) -> SymTensor {
        let ps = p.sym();
        let t = ps.norm();
        if t == 0.0 {
            return SymTensor::zeros(p.dim());
        }
        ps.scale(self.stress_factor(t))
    }

    /// `F(P) = (δ + |P^sym|)^{(p-2)/2} P^sym`.
    pub fn f_assoc(&self, p: &SymTensor) -> SymTensor {
        let ps = p.sym();
        let t = ps.norm();
        if t == 0.0 {
            return SymTensor::zeros(p.dim());
        }
        ps.scale(self.f_factor(t))
    }

    /// Directional derivative `dS(P)[Q]` for `P^sym ≠ 0`.
    pub fn stress_derivative(&self, p: &SymTensor, q: &SymTensor) -> SymTensor {
        let ps = p.sym();
        let qs = q.sym();
        let t = ps.norm();
        let (d, pe) = (self.nf.delta(), self.nf.p());
        if t == 0.0 {
            return qs.scale(self.mu * math::powf(d, pe - 2.0));
        }
        let a = math::powf(d + t, pe - 2.0);
        let second = self.nf.second_weighted(t, 1.0);
        let proj = ps.dot(&qs) / (t * t);
        qs.scale(self.mu * a)
            .add(&ps.scale(self.mu * (second - a) * proj))
    }

    /// Estimates `γ₀` and `γ₁` of the structure conditions by sampling
    /// random `P, Q` with entries in `[-scale, scale]`.
    pub fn calibrate<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        n: usize,
        samples: usize,
        scale: f64,
    ) {
        let mut g0 = f64::INFINITY;
        let mut g1 = 0.0f64;
        for _ in 0..samples {
            let p = SymTensor::random(rng, n, -scale, scale);
            let q = SymTensor::random(rng, n, -scale, scale);
            let ps = p.sym();
            let t = ps.norm();
            if t == 0.0 {
                continue;
            }
            let phi2 = self.nf.second_weighted(t, 1.0);
            let qs = q.sym();
            let qn = qs.norm();
            if qn > 0.0 {
                let form = self.stress_derivative(&p, &q).dot(&qs);
                g0 = g0.min(form / (phi2 * qn * qn));
            }
            // |∂_{kl} S_ij| from derivatives along unit directions E_kl
            for k in 0..n {
                for l in 0..n {
                    let mut e = SymTensor::zeros(n);
                    e.entries[k * n + l] = 1.0;
                    let ds = self.stress_derivative(&p, &e);
                    let m = ds.entries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    g1 = g1.max(m / phi2);
                }
            }
        }
        self.gamma0_est = Some(g0);
        self.gamma1_est = Some(g1);
    }
}

/// The quantities related by the hammer equivalences for a pair `(P, Q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HammerQuantities {
    /// `(S(P) - S(Q))·(P - Q)`
    pub monotone: f64,
    /// `|F(P) - F(Q)|²`
    pub f_diff_sq: f64,
    /// `φ_{|P^sym|}(|P^sym - Q^sym|)`
    pub shifted_phi: f64,
    /// `φ''(|P^sym| + |P^sym - Q^sym|) |P^sym - Q^sym|²`
    pub second_weighted: f64,
    /// `|S(P) - S(Q)|`
    pub stress_diff: f64,
    /// `φ'_{|P^sym|}(|P^sym - Q^sym|)`
    pub shifted_prime: f64,
}

impl HammerQuantities {
    pub fn chain(&self) -> [f64; 4] {
        [
            self.monotone,
            self.f_diff_sq,
            self.shifted_phi,
            self.second_weighted,
        ]
    }
}

pub fn hammer_quantities(
    model: &StressModel,
    p: &SymTensor,
    q: &SymTensor,
) -> Result<HammerQuantities> {
    if p.dim() != q.dim() {
        bail!(Shape, "tensors of different dimension");
    }
    let sp = model.stress(p);
    let sq = model.stress(q);
    let fp = model.f_assoc(p);
    let fq = model.f_assoc(q);
    let ps = p.sym();
    let diff = ps.sub(&q.sym());
    let a = ps.norm();
    let w = diff.norm();
    let shifted = model.nf.shifted(a)?;
    Ok(HammerQuantities {
        monotone: sp.sub(&sq).dot(&p.sub(q)),
        f_diff_sq: {
            let d = fp.sub(&fq).norm();
            d * d
        },
        shifted_phi: shifted.value(w),
        second_weighted: model.nf.second_weighted(a + w, w),
        stress_diff: sp.sub(&sq).norm(),
        shifted_prime: shifted.derivative(w),
    })
}

/// Running min/max of ratios `a/b`, skipping `0/0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for RatioRange {
    fn default() -> Self {
        Self {
            min: f64::INFINITY,
            max: 0.0,
            count: 0,
        }
    }
}

impl RatioRange {
    pub fn push(&mut self, a: f64, b: f64) {
        if a == 0.0 && b == 0.0 {
            return;
        }
        let r = a / b;
        self.min = self.min.min(r);
        self.max = self.max.max(r);
        self.count += 1;
    }

    pub fn is_finite(&self) -> bool {
        self.count > 0 && self.min > 0.0 && self.max.is_finite()
    }

    /// Smallest `C` with the range inside `[1/C, C]·c` for the best scaling `c`,
    /// i.e. `sqrt(max/min)`.
    pub fn spread(&self) -> f64 {
        math::sqrt(self.max / self.min)
    }
}

/// Ratio ranges over sampled pairs: the six pairings of the four chain
/// quantities, then `|S(P)-S(Q)| / φ'_{|P|}(|P-Q|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HammerStats {
    pub pairs: [RatioRange; 7],
    /// `S(Q)·Q / |F(Q)|²`, `S(Q)·Q / φ(|Q|)`, `|F(Q)|² / φ(|Q|)`
    pub coercivity: [RatioRange; 3],
    pub samples: usize,
}

pub const HAMMER_PAIR_LABELS: [&str; 7] = [
    "monotone/f_diff_sq",
    "monotone/shifted_phi",
    "monotone/second_weighted",
    "f_diff_sq/shifted_phi",
    "f_diff_sq/second_weighted",
    "shifted_phi/second_weighted",
    "stress_diff/shifted_prime",
];

/// Decades of `|P|` and `|P - Q|` on either side of the scale in [`sample_pair`].
pub const SAMPLE_DECADES: f64 = 3.0;

/// A random pair with `|P^sym|` and `|P^sym - Q^sym|` log-uniform on
/// `scale·[10^-D, 10^D]` and uniformly drawn directions, `D = SAMPLE_DECADES`.
pub fn sample_pair<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> (SymTensor, SymTensor) {
    let span = SAMPLE_DECADES * core::f64::consts::LN_10;
    let direction = |rng: &mut R| loop {
        let t = SymTensor::random(rng, n, -1.0, 1.0).sym();
        let r = t.norm();
        if r > 1e-3 && r <= 1.0 {
            break t.scale(1.0 / r);
        }
    };
    let a = scale * math::exp(rng.gen_range(-span..span));
    let t = scale * math::exp(rng.gen_range(-span..span));
    let p = direction(rng).scale(a);
    let q = p.add(&direction(rng).scale(t));
    (p, q)
}

/// Ratio ranges of the hammer quantities over `samples` pairs from
/// [`sample_pair`] at the scale `δ` (or 1 when `δ = 0`).
pub fn hammer_stats<R: Rng + ?Sized>(
    model: &StressModel,
    rng: &mut R,
    n: usize,
    samples: usize,
) -> Result<HammerStats> {
    let mut pairs = [RatioRange::default(); 7];
    let mut coercivity = [RatioRange::default(); 3];
    let scale = if model.delta() > 0.0 {
        model.delta()
    } else {
        1.0
    };
    for _ in 0..samples {
        let (p, q) = sample_pair(rng, n, scale);
        let h = hammer_quantities(model, &p, &q)?;
        let c = h.chain();
        let mut slot = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                pairs[slot].push(c[i], c[j]);
                slot += 1;
            }
        }
        pairs[6].push(h.stress_diff, h.shifted_prime);
        let sq = model.stress(&q).dot(&q);
        let f = model.f_assoc(&q).norm();
        let phi = model.nf.value(q.sym().norm());
        coercivity[0].push(sq, f * f);
        coercivity[1].push(sq, phi);
        coercivity[2].push(f * f, phi);
    }
    Ok(HammerStats {
        pairs,
        coercivity,
        samples,
    })
}

/// Pointwise ratio ranges of the difference-quotient equivalences on the
/// set where `x ± h e_k` stays on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffQuotEquiv {
    /// `d S(Du)·d Du / |d F(Du)|²`
    pub stress_vs_f: RatioRange,
    /// `d S(Du)·d Du / (δ+|Du|+|Δ Du|)^{p-2} |d Du|²`
    pub stress_vs_weighted: RatioRange,
    /// `|d F(Du)|² / (δ+|Du|+|Δ Du|)^{p-2} |d Du|²`
    pub f_vs_weighted: RatioRange,
    pub inner_points: usize,
}

pub fn diffquot_equiv(
    model: &StressModel,
    du: &Field,
    h: f64,
    k: usize,
    sign: Sign,
) -> Result<DiffQuotEquiv> {
    if du.rank() != Rank::Tensor {
        bail!(Shape, "expected a tensor field");
    }
    let g = du.grid();
    let n = g.dim();
    let s = g.steps_for(h)? as isize * sign.as_isize();
    let sfield = du.map_points(Rank::Tensor, |a, out| {
        let t = SymTensor::new(n, a.to_vec()).expect("tensor shape");
        out.copy_from_slice(model.stress(&t).entries());
    });
    let ffield = du.map_points(Rank::Tensor, |a, out| {
        let t = SymTensor::new(n, a.to_vec()).expect("tensor shape");
        out.copy_from_slice(model.f_assoc(&t).entries());
    });
    let ddu = diff_quot(du, k, h, sign)?;
    let ds = diff_quot(&sfield, k, h, sign)?;
    let df = diff_quot(&ffield, k, h, sign)?;
    let mut out = DiffQuotEquiv {
        stress_vs_f: RatioRange::default(),
        stress_vs_weighted: RatioRange::default(),
        f_vs_weighted: RatioRange::default(),
        inner_points: 0,
    };
    let (delta, p) = (model.delta(), model.p());
    for i in 0..g.len() {
        if g.shifted(i, k, s).is_none() {
            continue;
        }
        out.inner_points += 1;
        let a: f64 = ds.at(i).iter().zip(ddu.at(i)).map(|(x, y)| x * y).sum();
        let fb = df.norm_at(i);
        let b = fb * fb;
        let dn = ddu.norm_at(i);
        let base = delta + du.norm_at(i) + h * dn;
        let c = if dn == 0.0 {
            0.0
        } else {
            math::powf(base, p - 2.0) * dn * dn
        };
        out.stress_vs_f.push(a, b);
        out.stress_vs_weighted.push(a, c);
        out.f_vs_weighted.push(b, c);
    }
    if out.inner_points == 0 {
        bail!(Domain, "no grid point has its shift by h = {h} on the grid");
    }
    Ok(out)
}
