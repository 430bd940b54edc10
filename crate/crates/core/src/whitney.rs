//! Whitney-type decomposition of a bounded domain into dyadic cubes `Q` with
//! `dist(Q, ∂Ω) > 4 diam Q`.
//!
//! Cubes are stored by integer level and index, so containment and
//! disjointness are decided exactly.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{bail, Result};
use crate::math;

/// The open cube `Π (j_i 2^k, (j_i + 1) 2^k)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    pub level: i32,
    pub index: Vec<i64>,
}

impl DyadicCube {
    pub fn new(level: i32, index: Vec<i64>) -> Self {
        Self { level, index }
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// `ℓ(Q) = 2^level`, exact in floating point.
    pub fn side(&self) -> f64 {
        math::powi(2.0, self.level)
    }

    pub fn diam(&self) -> f64 {
        self.side() * math::sqrt(self.dim() as f64)
    }

    pub fn lower(&self) -> Vec<f64> {
        let s = self.side();
        self.index.iter().map(|&j| j as f64 * s).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        let s = self.side();
        self.index.iter().map(|&j| (j + 1) as f64 * s).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let s = self.side();
        self.index.iter().map(|&j| (j as f64 + 0.5) * s).collect()
    }

    /// Ancestor at `level`, which must not be below the cube's own level.
    pub fn ancestor(&self, level: i32) -> DyadicCube {
        let shift = (level - self.level) as u32;
        DyadicCube {
            level,
            index: self.index.iter().map(|&j| j >> shift).collect(),
        }
    }

    /// Whether `other ⊆ self`.
    pub fn contains(&self, other: &DyadicCube) -> bool {
        other.level <= self.level && other.ancestor(self.level) == *self
    }

    /// Open dyadic cubes meet iff one contains the other.
    pub fn intersects(&self, other: &DyadicCube) -> bool {
        self.contains(other) || other.contains(self)
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| DyadicCube {
                level: self.level - 1,
                index: (0..n)
                    .map(|i| 2 * self.index[i] + ((mask >> (n - 1 - i)) & 1) as i64)
                    .collect(),
            })
            .collect()
    }

    /// Whether the closed cube contains `x`.
    pub fn closure_contains(&self, x: &[f64]) -> bool {
        let s = self.side();
        x.iter()
            .zip(&self.index)
            .all(|(&xi, &j)| xi >= j as f64 * s && xi <= (j + 1) as f64 * s)
    }
}

/// How a closed box sits relative to the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxClass {
    /// The open box misses `Ω`.
    Outside,
    /// The closed box lies in `Ω` at distance `clearance` from `∂Ω`.
    Inside {
        clearance: f64,
    },
    Mixed,
}

/// Membership and boundary distance of a bounded domain.
pub trait Domain {
    fn dim(&self) -> usize;
    fn contains(&self, x: &[f64]) -> bool;
    /// `dist(x, ∂Ω)`.
    fn boundary_distance(&self, x: &[f64]) -> f64;
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>);
    fn classify_box(&self, lo: &[f64], hi: &[f64]) -> BoxClass;
    /// Whether `classify_box` is exact rather than sampled.
    fn is_exact(&self) -> bool;
}

fn nearest_farthest(center: &[f64], lo: &[f64], hi: &[f64]) -> (f64, f64) {
    let mut near = 0.0;
    let mut far = 0.0;
    for i in 0..center.len() {
        let c = center[i];
        let d_near = if c < lo[i] {
            lo[i] - c
        } else if c > hi[i] {
            c - hi[i]
        } else {
            0.0
        };
        let d_far = (c - lo[i]).abs().max((hi[i] - c).abs());
        near += d_near * d_near;
        far += d_far * d_far;
    }
    (math::sqrt(near), math::sqrt(far))
}

/// Open ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Domain for Ball {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn contains(&self, x: &[f64]) -> bool {
        math::dist(x, &self.center) < self.radius
    }
    fn boundary_distance(&self, x: &[f64]) -> f64 {
        (self.radius - math::dist(x, &self.center)).abs()
    }
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.center.iter().map(|c| c - self.radius).collect(),
            self.center.iter().map(|c| c + self.radius).collect(),
        )
    }
    fn classify_box(&self, lo: &[f64], hi: &[f64]) -> BoxClass {
        let (near, far) = nearest_farthest(&self.center, lo, hi);
        if near >= self.radius {
            BoxClass::Outside
        } else if far < self.radius {
            BoxClass::Inside {
                clearance: self.radius - far,
            }
        } else {
            BoxClass::Mixed
        }
    }
    fn is_exact(&self) -> bool {
        true
    }
}

/// Open axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain for BoxDomain {
    fn dim(&self) -> usize {
        self.lo.len()
    }
    fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v > self.lo[i] && v < self.hi[i])
    }
    fn boundary_distance(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            x.iter()
                .enumerate()
                .map(|(i, &v)| (v - self.lo[i]).min(self.hi[i] - v))
                .fold(f64::INFINITY, f64::min)
        } else {
            // distance from an exterior point to the box
            let (near, _) = nearest_farthest(x, &self.lo, &self.hi);
            near
        }
    }
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.clone(), self.hi.clone())
    }
    fn classify_box(&self, lo: &[f64], hi: &[f64]) -> BoxClass {
        let n = self.dim();
        if (0..n).any(|i| hi[i] <= self.lo[i] || lo[i] >= self.hi[i]) {
            return BoxClass::Outside;
        }
        if (0..n).all(|i| lo[i] > self.lo[i] && hi[i] < self.hi[i]) {
            let clearance = (0..n)
                .map(|i| (lo[i] - self.lo[i]).min(self.hi[i] - hi[i]))
                .fold(f64::INFINITY, f64::min);
            return BoxClass::Inside { clearance };
        }
        BoxClass::Mixed
    }
    fn is_exact(&self) -> bool {
        true
    }
}

/// Open spherical shell `r_in < |x - c| < r_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Annulus {
    pub center: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
}

impl Domain for Annulus {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn contains(&self, x: &[f64]) -> bool {
        let r = math::dist(x, &self.center);
        r > self.inner && r < self.outer
    }
    fn boundary_distance(&self, x: &[f64]) -> f64 {
        let r = math::dist(x, &self.center);
        (r - self.inner).abs().min((self.outer - r).abs())
    }
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.center.iter().map(|c| c - self.outer).collect(),
            self.center.iter().map(|c| c + self.outer).collect(),
        )
    }
    fn classify_box(&self, lo: &[f64], hi: &[f64]) -> BoxClass {
        let (near, far) = nearest_farthest(&self.center, lo, hi);
        if near >= self.outer || far <= self.inner {
            BoxClass::Outside
        } else if near > self.inner && far < self.outer {
            BoxClass::Inside {
                clearance: (self.outer - far).min(near - self.inner),
            }
        } else {
            BoxClass::Mixed
        }
    }
    fn is_exact(&self) -> bool {
        true
    }
}

/// A domain given by user closures; boxes are classified by sampling a
/// lattice of at least `2^n · 9` points, which is not conservative.
pub struct SampledDomain<M, D> {
    pub membership: M,
    pub distance: D,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl<M, D> Domain for SampledDomain<M, D>
where
    M: Fn(&[f64]) -> bool,
    D: Fn(&[f64]) -> f64,
{
    fn dim(&self) -> usize {
        self.lo.len()
    }
    fn contains(&self, x: &[f64]) -> bool {
        (self.membership)(x)
    }
    fn boundary_distance(&self, x: &[f64]) -> f64 {
        (self.distance)(x)
    }
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.clone(), self.hi.clone())
    }
    fn classify_box(&self, lo: &[f64], hi: &[f64]) -> BoxClass {
        let n = self.dim();
        let target = (1usize << n) * 9;
        let mut m = 2usize;
        while m.pow(n as u32) < target {
            m += 1;
        }
        let total = m.pow(n as u32);
        let mut x = vec![0.0; n];
        let (mut inside, mut clearance) = (0usize, f64::INFINITY);
        for t in 0..total {
            let mut r = t;
            for i in 0..n {
                let a = r % m;
                r /= m;
                x[i] = lo[i] + (hi[i] - lo[i]) * a as f64 / (m - 1) as f64;
            }
            if (self.membership)(&x) {
                inside += 1;
                clearance = clearance.min((self.distance)(&x));
            }
        }
        if inside == 0 {
            BoxClass::Outside
        } else if inside == total {
            BoxClass::Inside { clearance }
        } else {
            BoxClass::Mixed
        }
    }
    fn is_exact(&self) -> bool {
        false
    }
}

/// Output of [`whitney_decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct WhitneyDecomposition {
    /// Sorted by level (descending), then index.
    pub cubes: Vec<DyadicCube>,
    pub min_level: i32,
    /// Cubes at `min_level` that meet `Ω` but were not accepted.
    pub unresolved_cubes: usize,
    /// Upper bound of the measure of `Ω` not covered by `cubes`.
    pub unresolved_measure: f64,
    /// False when distances came from a sampled domain.
    pub exact: bool,
}

/// Accepts a dyadic cube once `dist(Q, ∂Ω) > 4 diam Q`, otherwise subdivides
/// down to `min_level`; cubes missing `Ω` are dropped.
pub fn whitney_decompose<D: Domain + ?Sized>(
    domain: &D,
    min_level: i32,
) -> Result<WhitneyDecomposition> {
    let n = domain.dim();
    let (lo, hi) = domain.bounding_box();
    if lo.len() != n || hi.len() != n {
        bail!(Shape, "bounding box dimension does not match the domain");
    }
    if lo.iter().chain(&hi).any(|v| !v.is_finite()) || lo.iter().zip(&hi).any(|(a, b)| b <= a) {
        bail!(
            Domain,
            "domain must have a finite, nondegenerate bounding box"
        );
    }
    let extent = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let top = math::ceil(math::log2(extent)) as i32;
    if min_level > top {
        bail!(Domain, "min_level {min_level} is above the top level {top}");
    }
    if top - min_level > 60 {
        bail!(Domain, "refinement depth {} is too large", top - min_level);
    }
    let side = math::powi(2.0, top);
    let ranges: Vec<(i64, i64)> = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (math::floor(a / side) as i64, math::ceil(b / side) as i64))
        .collect();
    let mut stack = Vec::new();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    'outer: loop {
        stack.push(DyadicCube::new(top, idx.clone()));
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < ranges[i].1 {
                continue 'outer;
            }
            idx[i] = ranges[i].0;
        }
        break;
    }
    let sqrt_n = math::sqrt(n as f64);
    let mut cubes = Vec::new();
    let mut unresolved = 0usize;
    while let Some(q) = stack.pop() {
        let (ql, qh) = (q.lower(), q.upper());
        match domain.classify_box(&ql, &qh) {
            BoxClass::Outside => {}
            BoxClass::Inside { clearance } if clearance > 4.0 * sqrt_n * q.side() => cubes.push(q),
            _ => {
                if q.level > min_level {
                    stack.extend(q.children());
                } else {
                    unresolved += 1;
                }
            }
        }
    }
    sort_cubes(&mut cubes);
    Ok(WhitneyDecomposition {
        cubes,
        min_level,
        unresolved_cubes: unresolved,
        unresolved_measure: unresolved as f64 * math::powi(2.0, min_level * n as i32),
        exact: domain.is_exact(),
    })
}

/// Level descending, then lexicographic index.
pub fn sort_cubes(cubes: &mut [DyadicCube]) {
    cubes.sort_by(|a, b| b.level.cmp(&a.level).then_with(|| a.index.cmp(&b.index)));
}

/// Result of checking the Whitney properties.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitneyReport {
    pub cubes: usize,
    /// Pairs `(ancestor-or-equal, descendant)` found among the cubes.
    pub overlaps: usize,
    /// Cubes violating `dist(Q, ∂Ω) > 4 diam Q`.
    pub distance_violations: usize,
    /// `min dist(Q, ∂Ω) / (4 diam Q)`.
    pub min_distance_ratio: f64,
    /// Fraction of sample points in the closure of some cube.
    pub covered_fraction: f64,
    /// Fraction covered or within `band` of `∂Ω`.
    pub coverage: f64,
    pub samples: usize,
    pub exact: bool,
}

impl WhitneyReport {
    pub fn disjoint(&self) -> bool {
        self.overlaps == 0
    }
    pub fn distance_ok(&self) -> bool {
        self.distance_violations == 0
    }
}

/// Checks pairwise disjointness (exact), the distance condition per cube, and
/// the fraction of `samples` covered by cube closures or lying within `band`
/// of the boundary.
pub fn verify_decomposition<D: Domain + ?Sized>(
    cubes: &[DyadicCube],
    domain: &D,
    samples: &[Vec<f64>],
    band: f64,
) -> Result<WhitneyReport> {
    if cubes.is_empty() {
        bail!(Precondition, "cube list is empty");
    }
    let n = domain.dim();
    if cubes.iter().any(|q| q.dim() != n) {
        bail!(Shape, "cube dimension does not match the domain");
    }
    let set: BTreeSet<&DyadicCube> = cubes.iter().collect();
    let top = cubes.iter().map(|q| q.level).max().unwrap_or(0);
    let mut overlaps = cubes.len() - set.len();
    for q in &set {
        for level in q.level + 1..=top {
            if set.contains(&q.ancestor(level)) {
                overlaps += 1;
            }
        }
    }
    let sqrt_n = math::sqrt(n as f64);
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for q in cubes {
        let ratio = match domain.classify_box(&q.lower(), &q.upper()) {
            BoxClass::Inside { clearance } => clearance / (4.0 * sqrt_n * q.side()),
            _ => 0.0,
        };
        if !(ratio > 1.0) {
            violations += 1;
        }
        min_ratio = min_ratio.min(ratio);
    }
    let mut levels: Vec<i32> = cubes.iter().map(|q| q.level).collect();
    levels.sort_unstable();
    levels.dedup();
    let mut covered = 0usize;
    let mut in_band = 0usize;
    for x in samples {
        let hit = levels.iter().any(|&k| {
            let s = math::powi(2.0, k);
            // the closure may put x on a face shared with the lower neighbour
            let base: Vec<i64> = x.iter().map(|&v| math::floor(v / s) as i64).collect();
            let on_face: Vec<bool> = x
                .iter()
                .zip(&base)
                .map(|(&v, &j)| v == j as f64 * s)
                .collect();
            let choices = 1usize << n;
            (0..choices).any(|mask| {
                let mut idx = base.clone();
                for i in 0..n {
                    if (mask >> i) & 1 == 1 {
                        if !on_face[i] {
                            return false;
                        }
                        idx[i] -= 1;
                    }
                }
                set.contains(&DyadicCube::new(k, idx))
            })
        });
        if hit {
            covered += 1;
        } else if domain.boundary_distance(x) <= band {
            in_band += 1;
        }
    }
    let total = samples.len().max(1) as f64;
    Ok(WhitneyReport {
        cubes: cubes.len(),
        overlaps,
        distance_violations: violations,
        min_distance_ratio: min_ratio,
        covered_fraction: covered as f64 / total,
        coverage: (covered + in_band) as f64 / total,
        samples: samples.len(),
        exact: domain.is_exact(),
    })
}

/// `count` points drawn uniformly from the domain by rejection from its
/// bounding box.
pub fn sample_interior<D: Domain + ?Sized, R: Rng + ?Sized>(
    domain: &D,
    rng: &mut R,
    count: usize,
) -> Vec<Vec<f64>> {
    let (lo, hi) = domain.bounding_box();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| rng.gen_range(*a..*b))
            .collect();
        if domain.contains(&x) {
            out.push(x);
        }
    }
    out
}
