//! Stationary p-Stokes flow on a square, solved by minimizing the discrete
//! energy over exactly solenoidal velocities `u = curl ψ`.
//!
//! The grid has `N` cells and `N + 1` points per axis. `ψ` vanishes on the two
//! outermost layers and `u = (∂₂ψ, -∂₁ψ)` by centered differences, so the
//! centered divergence of `u` is zero. The energy takes `Du` at cell centers
//! from compact differences of `ψ`,
//!
//! `(Du)₁₁ = -(Du)₂₂ = ∂₁∂₂ψ`, `(Du)₁₂ = ½(∂₂²ψ - ∂₁²ψ)`,
//!
//! with the mixed derivative on the four cell corners and the pure ones as
//! corner averages of three-point differences.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::bogovskii::{Cube, Mollifier};
use crate::error::{bail, Result};
use crate::grid::{self, Field, Rank, Sign, UniformGrid};
use crate::linalg::BandedSym;
use crate::math;
use crate::nfunc::NFunction;
use crate::tensor::StressModel;

/// Width of the layer where `ψ = 0`.
pub const MARGIN: usize = 2;

/// `-div S(Du) = f` on the square `(0, L)²` with `u = 0` on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct PStokesProblem {
    model: StressModel,
    f: Field,
    cells: usize,
}

impl PStokesProblem {
    /// `f` must be a vector field on [`Self::grid_for`]`(side, cells)`.
    pub fn new(model: StressModel, f: Field) -> Result<Self> {
        let g = f.grid();
        let (p, d) = (model.p(), model.delta());
        if !(p > 1.0 && p <= 2.0) {
            bail!(Domain, "p must lie in (1, 2], got {p}");
        }
        if !(d > 0.0 || p == 2.0) {
            bail!(Domain, "the solver needs delta > 0 unless p = 2");
        }
        if g.dim() != 2 || f.rank() != Rank::Vector || g.dims()[0] != g.dims()[1] {
            bail!(Shape, "data must be a vector field on a square 2D grid");
        }
        if g.origin().iter().any(|&o| o != 0.0) {
            bail!(Shape, "the grid must start at the origin");
        }
        let cells = g.dims()[0] - 1;
        if cells < 2 * MARGIN + 4 {
            bail!(
                Domain,
                "need at least {} cells, got {cells}",
                2 * MARGIN + 4
            );
        }
        if f.values().iter().any(|v| !v.is_finite()) {
            bail!(Domain, "data must be finite");
        }
        Ok(Self { model, f, cells })
    }

    /// The point grid with `cells` cells on `(0, side)²`.
    pub fn grid_for(side: f64, cells: usize) -> Result<UniformGrid> {
        UniformGrid::new(&[0.0, 0.0], side / cells as f64, &[cells + 1, cells + 1])
    }

    pub fn grid(&self) -> &UniformGrid {
        self.f.grid()
    }

    pub fn model(&self) -> &StressModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut StressModel {
        &mut self.model
    }

    pub fn forcing(&self) -> &Field {
        &self.f
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn side(&self) -> f64 {
        self.grid().spacing() * self.cells as f64
    }

    fn m(&self) -> usize {
        self.cells + 1
    }

    /// Whether `ψ` at `(i, j)` is a free unknown.
    fn is_free(&self, i: usize, j: usize) -> bool {
        let hi = self.cells - MARGIN;
        i >= MARGIN && i <= hi && j >= MARGIN && j <= hi
    }

    fn is_interior(&self, i: usize, j: usize) -> bool {
        i >= 1 && j >= 1 && i < self.cells && j < self.cells
    }
}

/// Default amplitude of [`vortex_forcing`] on the unit square, where it gives
/// `max |Du| ≈ 1`.
pub const VORTEX_AMPLITUDE: f64 = 250.0;

/// A smooth rotating force `A (-(x₂-c₂), x₁-c₁) exp(-|x-c|²/(2σ²))` centered
/// in the square with `σ = L/8`.
pub fn vortex_forcing(side: f64, cells: usize, amplitude: f64) -> Result<Field> {
    let g = PStokesProblem::grid_for(side, cells)?;
    let c = 0.5 * side;
    let s = side / 8.0;
    Ok(Field::from_fn(g, Rank::Vector, |x, out| {
        let (a, b) = (x[0] - c, x[1] - c);
        let e = amplitude * math::exp(-(a * a + b * b) / (2.0 * s * s));
        out[0] = -b * e;
        out[1] = a * e;
    }))
}

/// Values of `ψ` that vanish on the margin, read from a scalar field.
fn check_psi(problem: &PStokesProblem, psi: &Field) -> Result<()> {
    if psi.rank() != Rank::Scalar || psi.grid() != problem.grid() {
        bail!(
            Shape,
            "stream function must be a scalar field on the problem grid"
        );
    }
    let m = problem.m();
    for i in 0..m {
        for j in 0..m {
            if !problem.is_free(i, j) && psi.values()[i * m + j] != 0.0 {
                bail!(
                    Precondition,
                    "stream function must vanish on the {MARGIN}-point margin"
                );
            }
        }
    }
    Ok(())
}

/// Offsets from the lower-left corner of a cell and weights (times `h²`) of
/// the two strain stencils at the cell center.
const S11: [(isize, isize, f64); 4] = [(1, 1, 1.0), (1, 0, -1.0), (0, 1, -1.0), (0, 0, 1.0)];
const S12: [(isize, isize, f64); 8] = [
    (2, 0, -0.125),
    (2, 1, -0.125),
    (-1, 0, -0.125),
    (-1, 1, -0.125),
    (0, 2, 0.125),
    (1, 2, 0.125),
    (0, -1, 0.125),
    (1, -1, 0.125),
];

/// Linear index of `(i + di, j + dj)`, or `None` off the grid (where `ψ = 0`).
#[inline]
fn offset(m: usize, i: usize, j: usize, di: isize, dj: isize) -> Option<usize> {
    let (a, b) = (i as isize + di, j as isize + dj);
    (a >= 0 && b >= 0 && (a as usize) < m && (b as usize) < m).then(|| a as usize * m + b as usize)
}

#[inline]
fn apply(stencil: &[(isize, isize, f64)], psi: &[f64], m: usize, i: usize, j: usize) -> f64 {
    stencil
        .iter()
        .filter_map(|&(di, dj, c)| offset(m, i, j, di, dj).map(|k| c * psi[k]))
        .sum()
}

/// `((Du)₁₁, (Du)₁₂)` at the center of cell `(i, j)`.
#[inline]
fn du_at(psi: &[f64], m: usize, h: f64, i: usize, j: usize) -> (f64, f64) {
    let h2 = h * h;
    (
        apply(&S11, psi, m, i, j) / h2,
        apply(&S12, psi, m, i, j) / h2,
    )
}

/// `|Du|² = 2 d₁₁² + 2 d₁₂²`.
#[inline]
fn du_norm(d11: f64, d12: f64) -> f64 {
    math::sqrt(2.0 * (d11 * d11 + d12 * d12))
}

fn velocity_values(psi: &[f64], m: usize, h: f64) -> Vec<f64> {
    let mut u = vec![0.0; 2 * m * m];
    let at = |a: usize, b: usize| psi[a * m + b];
    for i in 1..m - 1 {
        for j in 1..m - 1 {
            u[2 * (i * m + j)] = (at(i, j + 1) - at(i, j - 1)) / (2.0 * h);
            u[2 * (i * m + j) + 1] = -(at(i + 1, j) - at(i - 1, j)) / (2.0 * h);
        }
    }
    u
}

/// `u = curl ψ` with the outermost layer set to zero.
pub fn velocity(problem: &PStokesProblem, psi: &Field) -> Result<Field> {
    check_psi(problem, psi)?;
    let g = problem.grid();
    Field::from_values(
        g.clone(),
        Rank::Vector,
        velocity_values(psi.values(), problem.m(), g.spacing()),
    )
}

/// `Du` at the grid points by centered differences of [`velocity`], zero on
/// the outermost layer.
pub fn strain(problem: &PStokesProblem, psi: &Field) -> Result<Field> {
    let mut du = grid::sym_gradient(&velocity(problem, psi)?)?;
    let g = problem.grid().clone();
    for i in 0..g.len() {
        if !grid::is_inner(&g, i, 1) {
            du.at_mut(i).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(du)
}

/// `J(ψ) = h² Σ_cells μ φ(|Du|) - h² Σ f·u`.
pub fn discrete_energy(problem: &PStokesProblem, psi: &Field) -> Result<f64> {
    check_psi(problem, psi)?;
    Ok(energy_raw(problem, psi.values()))
}

fn energy_raw(problem: &PStokesProblem, psi: &[f64]) -> f64 {
    let g = problem.grid();
    let (m, h) = (problem.m(), g.spacing());
    let model = problem.model();
    let mut e = 0.0;
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            let (d11, d12) = du_at(psi, m, h, i, j);
            e += model.mu * model.nf.value(du_norm(d11, d12));
        }
    }
    let u = velocity_values(psi, m, h);
    let work: f64 = u.iter().zip(problem.f.values()).map(|(a, b)| a * b).sum();
    (e - work) * h * h
}

/// `h² curlᵀ f`, the gradient of the work term.
fn load(problem: &PStokesProblem) -> Vec<f64> {
    let g = problem.grid();
    let (m, h) = (problem.m(), g.spacing());
    let f = problem.f.values();
    let f1 = |a: usize, b: usize| f[2 * (a * m + b)];
    let f2 = |a: usize, b: usize| f[2 * (a * m + b) + 1];
    let mut b = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            if !problem.is_free(i, j) {
                continue;
            }
            // u at the outermost layer is fixed to zero, so f there does no work
            let inner = |a: usize, c: usize| problem.is_interior(a, c);
            let mut s = 0.0;
            if inner(i, j - 1) {
                s += f1(i, j - 1);
            }
            if inner(i, j + 1) {
                s -= f1(i, j + 1);
            }
            if inner(i - 1, j) {
                s -= f2(i - 1, j);
            }
            if inner(i + 1, j) {
                s += f2(i + 1, j);
            }
            b[i * m + j] = s * h / 2.0;
        }
    }
    b
}

fn gradient_raw(problem: &PStokesProblem, psi: &[f64], load: &[f64]) -> Vec<f64> {
    let g = problem.grid();
    let (m, h) = (problem.m(), g.spacing());
    let model = problem.model();
    let mut grad = vec![0.0; m * m];
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            let (d11, d12) = du_at(psi, m, h, i, j);
            let t = du_norm(d11, d12);
            // ∂/∂d of μ φ(√2 |d|) is 2 μ φ'(t)/t d
            let w = 2.0 * model.stress_factor(t);
            let (g11, g12) = (w * d11, w * d12);
            for &(di, dj, c) in S11.iter() {
                if let Some(k) = offset(m, i, j, di, dj) {
                    grad[k] += g11 * c;
                }
            }
            for &(di, dj, c) in S12.iter() {
                if let Some(k) = offset(m, i, j, di, dj) {
                    grad[k] += g12 * c;
                }
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            let k = i * m + j;
            grad[k] = if problem.is_free(i, j) {
                grad[k] - load[k]
            } else {
                0.0
            };
        }
    }
    grad
}

/// The exact gradient of [`discrete_energy`] with respect to the free values
/// of `ψ` (zero on the margin).
pub fn energy_gradient(problem: &PStokesProblem, psi: &Field) -> Result<Field> {
    check_psi(problem, psi)?;
    let b = load(problem);
    Field::from_values(
        problem.grid().clone(),
        Rank::Scalar,
        gradient_raw(problem, psi.values(), &b),
    )
}

/// Hessian of the energy on the free unknowns, ordered row-major over
/// `[MARGIN, N - MARGIN]²`.
fn hessian(problem: &PStokesProblem, psi: &[f64]) -> Result<BandedSym> {
    let g = problem.grid();
    let (m, h) = (problem.m(), g.spacing());
    let model = problem.model();
    let nf = &model.nf;
    let free = problem.cells - 2 * MARGIN + 1;
    let mut hs = BandedSym::zeros(free * free, 3 * free + 3);
    let unknown = |a: isize, b: isize| -> Option<usize> {
        let lo = MARGIN as isize;
        let hi = (problem.cells - MARGIN) as isize;
        if a >= lo && a <= hi && b >= lo && b <= hi {
            Some(((a - lo) * free as isize + (b - lo)) as usize)
        } else {
            None
        }
    };
    let mut idx: Vec<(usize, f64, f64)> = Vec::with_capacity(12);
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            let (d11, d12) = du_at(psi, m, h, i, j);
            let t = du_norm(d11, d12);
            let a = model.stress_factor(t);
            // ∇²(μφ(t)) in (d11, d12): 2a I + μ(φ'' - φ'/t)/t² (2d)(2d)ᵀ
            let (h11, h12, h22) = if t > 0.0 {
                let c = (model.mu * nf.second(t)? - a) / (t * t);
                (
                    2.0 * a + 4.0 * c * d11 * d11,
                    4.0 * c * d11 * d12,
                    2.0 * a + 4.0 * c * d12 * d12,
                )
            } else {
                (2.0 * a, 0.0, 2.0 * a)
            };
            idx.clear();
            for (s, first) in [(&S11[..], true), (&S12[..], false)] {
                for &(di, dj, c) in s {
                    if let Some(k) = unknown(i as isize + di, j as isize + dj) {
                        let (c11, c12) = if first { (c, 0.0) } else { (0.0, c) };
                        idx.push((k, c11, c12));
                    }
                }
            }
            let scale = 1.0 / (h * h);
            for &(kx, ax, bx) in &idx {
                for &(ky, ay, by) in &idx {
                    if kx >= ky {
                        let v = ax * (h11 * ay + h12 * by) + bx * (h12 * ay + h22 * by);
                        hs.add(kx, ky, v * scale)?;
                    }
                }
            }
        }
    }
    Ok(hs)
}

/// A computed flow.
#[derive(Debug, Clone, PartialEq)]
pub struct PStokesSolution {
    pub psi: Field,
    pub u: Field,
    pub du: Field,
    /// `F(Du)`.
    pub f_du: Field,
    /// Energies after every accepted step, starting from the initial guess.
    pub energy_history: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Newton iteration from `ψ = 0`; see [`solve_from`].
pub fn solve(problem: &PStokesProblem, tol: f64, max_iters: usize) -> Result<PStokesSolution> {
    let psi = Field::zeros(problem.grid().clone(), Rank::Scalar);
    solve_from(problem, psi, tol, max_iters)
}

/// Damped Newton iteration with Armijo backtracking, stopping once
/// `‖∇J‖₂ ≤ tol (1 + ‖f‖₂)` (Euclidean norms of the value arrays). A step is
/// accepted only if it does not increase the energy.
pub fn solve_from(
    problem: &PStokesProblem,
    psi0: Field,
    tol: f64,
    max_iters: usize,
) -> Result<PStokesSolution> {
    if !(tol > 0.0) {
        bail!(Domain, "tolerance must be positive");
    }
    check_psi(problem, &psi0)?;
    let b = load(problem);
    let target = tol * (1.0 + math::norm(problem.f.values()));
    let mut psi = psi0.values().to_vec();
    let mut energy = energy_raw(problem, &psi);
    let mut history = vec![energy];
    let mut grad = gradient_raw(problem, &psi, &b);
    let mut gnorm = math::norm(&grad);
    let free = problem.cells - 2 * MARGIN + 1;
    let m = problem.m();
    let to_full = |k: usize| (k / free + MARGIN) * m + (k % free + MARGIN);
    let mut iterations = 0;
    while gnorm > target && iterations < max_iters {
        iterations += 1;
        let chol = hessian(problem, &psi)?.cholesky()?;
        let rhs: Vec<f64> = (0..free * free).map(|k| -grad[to_full(k)]).collect();
        let step = chol.solve(&rhs)?;
        let slope: f64 = -step.iter().zip(&rhs).map(|(a, b)| a * b).sum::<f64>();
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut trial = psi.clone();
        while alpha > 1e-10 {
            for (k, s) in step.iter().enumerate() {
                let f = to_full(k);
                trial[f] = psi[f] + alpha * s;
            }
            let e = energy_raw(problem, &trial);
            if e <= energy + 1e-4 * alpha * slope {
                accepted = true;
            } else if e <= energy {
                // rounding can hide the predicted decrease near the minimum
                let g = math::norm(&gradient_raw(problem, &trial, &b));
                accepted = g < gnorm;
            }
            if accepted {
                energy = e;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        psi = trial;
        history.push(energy);
        grad = gradient_raw(problem, &psi, &b);
        gnorm = math::norm(&grad);
    }
    let g = problem.grid().clone();
    let psi = Field::from_values(g, Rank::Scalar, psi)?;
    finish(problem, psi, history, gnorm, iterations, gnorm <= target)
}

fn finish(
    problem: &PStokesProblem,
    psi: Field,
    energy_history: Vec<f64>,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
) -> Result<PStokesSolution> {
    let u = velocity(problem, &psi)?;
    let du = strain(problem, &psi)?;
    let model = problem.model();
    let f_du = du.map_points(Rank::Tensor, |d, out| {
        let t = math::sqrt(d.iter().map(|v| v * v).sum());
        let s = if t > 0.0 { model.f_factor(t) } else { 0.0 };
        for (o, v) in out.iter_mut().zip(d) {
            *o = s * v;
        }
    });
    Ok(PStokesSolution {
        psi,
        u,
        du,
        f_du,
        energy_history,
        grad_norm,
        iterations,
        converged,
    })
}

/// Bilinear interpolation of a coarse stream function onto the grid of
/// `problem`, with the margin reset to zero.
pub fn prolong(problem: &PStokesProblem, coarse: &Field) -> Result<Field> {
    let cg = coarse.grid();
    if cg.dim() != 2 || coarse.rank() != Rank::Scalar {
        bail!(
            Shape,
            "coarse stream function must be a planar scalar field"
        );
    }
    let g = problem.grid();
    let cm = cg.dims()[0];
    let ch = cg.spacing();
    let m = problem.m();
    let mut out = Field::zeros(g.clone(), Rank::Scalar);
    for i in 0..m {
        for j in 0..m {
            if !problem.is_free(i, j) {
                continue;
            }
            let x = g.point(i * m + j);
            let (sx, sy) = (x[0] / ch, x[1] / ch);
            let (a, b) = (
                (math::floor(sx) as usize).min(cm - 2),
                (math::floor(sy) as usize).min(cm - 2),
            );
            let (tx, ty) = (sx - a as f64, sy - b as f64);
            let v = |p: usize, q: usize| coarse.values()[p * cm + q];
            out.values_mut()[i * m + j] = (1.0 - tx) * (1.0 - ty) * v(a, b)
                + tx * (1.0 - ty) * v(a + 1, b)
                + (1.0 - tx) * ty * v(a, b + 1)
                + tx * ty * v(a + 1, b + 1);
        }
    }
    Ok(out)
}

/// `max |div u|` over points at least `margin` points from the boundary.
pub fn interior_divergence(solution: &PStokesSolution, margin: usize) -> Result<f64> {
    let div = grid::divergence(&solution.u)?;
    let g = solution.u.grid();
    Ok((0..g.len())
        .filter(|&i| grid::is_inner(g, i, margin))
        .fold(0.0, |m, i| m.max(div.values()[i].abs())))
}

/// `|h² Σ S(Du):Dw - h² Σ f·w| / ‖∇w‖_{L^{p'}}` for `w = curl η`.
pub fn weak_residual_for(
    problem: &PStokesProblem,
    solution: &PStokesSolution,
    eta: &Field,
) -> Result<f64> {
    check_psi(problem, eta)?;
    let g = problem.grid();
    let (m, h) = (problem.m(), g.spacing());
    let model = problem.model();
    let mut form = 0.0;
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            let (d11, d12) = du_at(solution.psi.values(), m, h, i, j);
            let (w11, w12) = du_at(eta.values(), m, h, i, j);
            let t = du_norm(d11, d12);
            // S:Dw with S₂₂ = -S₁₁ and both off-diagonal entries
            form += model.stress_factor(t) * 2.0 * (d11 * w11 + d12 * w12);
        }
    }
    let w = velocity(problem, eta)?;
    let work: f64 = w
        .values()
        .iter()
        .zip(problem.f.values())
        .map(|(a, b)| a * b)
        .sum();
    let num = ((form - work) * h * h).abs();
    let pc = model.nf.p_conj();
    let den = grid::gradient(&w)?.lp_norm(pc, None);
    if !(den > 0.0) {
        bail!(Precondition, "test field has zero gradient");
    }
    Ok(num / den)
}

/// Smooth bump `exp(-1/(1 - |x-c|²/r²))` vanishing on the margin.
pub fn bump_stream(problem: &PStokesProblem, center: &[f64], radius: f64) -> Field {
    let m = problem.m();
    let mut eta = Field::scalar_from_fn(problem.grid().clone(), |x| {
        let s = (math::dist(x, center) / radius).min(1.0);
        if s >= 1.0 {
            0.0
        } else {
            math::exp(-1.0 / (1.0 - s * s))
        }
    });
    for i in 0..m {
        for j in 0..m {
            if !problem.is_free(i, j) {
                eta.values_mut()[i * m + j] = 0.0;
            }
        }
    }
    eta
}

/// Max of [`weak_residual_for`] over `num_tests` random bumps placed in the
/// middle of the square.
pub fn weak_residual<R: Rng + ?Sized>(
    solution: &PStokesSolution,
    problem: &PStokesProblem,
    num_tests: usize,
    rng: &mut R,
) -> Result<f64> {
    let l = problem.side();
    let mut worst: f64 = 0.0;
    for _ in 0..num_tests {
        let c = [
            rng.gen_range(0.35 * l..0.65 * l),
            rng.gen_range(0.35 * l..0.65 * l),
        ];
        let r = rng.gen_range(0.1 * l..0.2 * l);
        let amp = rng.gen_range(0.5..2.0);
        let eta = bump_stream(problem, &c, r).scale(amp);
        worst = worst.max(weak_residual_for(problem, solution, &eta)?);
    }
    Ok(worst)
}

/// `γ̂₀ h² Σ φ(|∇u|) / h² Σ φ*(|f|)` with the sampled coercivity of the model.
pub fn apriori_ratio(solution: &PStokesSolution, problem: &PStokesProblem) -> Result<f64> {
    let model = problem.model();
    let Some(g0) = model.gamma0_est else {
        bail!(Precondition, "stress model is not calibrated");
    };
    let grad = grid::gradient(&solution.u)?;
    let lhs: f64 = (0..grad.len())
        .map(|i| model.nf.value(grad.norm_at(i)))
        .sum();
    let mut rhs = 0.0;
    for i in 0..problem.f.len() {
        rhs += model.nf.conjugate(problem.f.norm_at(i))?;
    }
    if !(rhs > 0.0) {
        bail!(Precondition, "data has zero modular");
    }
    Ok(g0 * lhs / rhs)
}

/// A cutoff `ξ` with `ξ = 1` on `½Q` and `ξ = 0` outside `¾Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffSpec {
    pub cube: Cube,
    pub xi: Field,
    /// `sup |∇ξ|`.
    pub norm1: f64,
    /// `sup |∇²ξ|` (Frobenius).
    pub norm2: f64,
}

/// Transition profile: 1 at `τ ≤ 0`, 0 at `τ ≥ 1`, smooth in between.
fn cutoff_profile(bump: &Mollifier, tau: f64) -> Result<f64> {
    bump.cumulative(crate::bogovskii::BUMP_RADIUS * (1.0 - 2.0 * tau.clamp(0.0, 1.0)))
}

/// Tensor product of a one-dimensional smoothed step in each axis. The
/// transition band `(ℓ/4, 3ℓ/8)` from the center must span at least
/// `min_band_cells` grid cells (at least 8). Derivative norms are measured by
/// finite differences on a grid refined by `refine`.
pub fn make_cutoff(
    cube: &Cube,
    grid: &UniformGrid,
    min_band_cells: usize,
    refine: usize,
) -> Result<CutoffSpec> {
    if min_band_cells < 8 {
        bail!(Domain, "the transition band needs at least 8 cells");
    }
    if cube.dim() != grid.dim() {
        bail!(Shape, "cube and grid dimensions differ");
    }
    let ell = cube.side();
    let band = ell / 8.0;
    if band < min_band_cells as f64 * grid.spacing() * (1.0 - 1e-12) {
        bail!(
            Domain,
            "cube of side {ell} gives a transition band of {:.2} cells, fewer than {min_band_cells}",
            band / grid.spacing()
        );
    }
    for k in 0..grid.dim() {
        let lo = grid.origin()[k];
        let hi = lo + (grid.dims()[k] - 1) as f64 * grid.spacing();
        let c = cube.center()[k];
        if c - 0.375 * ell <= lo + grid.spacing() || c + 0.375 * ell >= hi - grid.spacing() {
            bail!(Domain, "¾Q must lie inside the grid with a margin");
        }
    }
    let bump = Mollifier::new(1)?;
    let xi_at = |x: &[f64]| -> Result<f64> {
        let mut v = 1.0;
        for (k, xk) in x.iter().enumerate() {
            let d = (xk - cube.center()[k]).abs();
            v *= cutoff_profile(&bump, (d - 0.25 * ell) / band)?;
        }
        Ok(v)
    };
    let mut xi = Field::zeros(grid.clone(), Rank::Scalar);
    for i in 0..grid.len() {
        xi.values_mut()[i] = xi_at(&grid.point(i))?;
    }
    // derivative norms on a refined grid covering ¾Q
    let r = refine.max(1);
    let hf = grid.spacing() / r as f64;
    let cells = math::ceil(0.8 * ell / hf) as usize;
    let lo: Vec<f64> = cube.center().iter().map(|c| c - 0.4 * ell).collect();
    let fine = UniformGrid::new(&lo, 0.8 * ell / cells as f64, &vec![cells + 1; grid.dim()])?;
    let mut xf = Field::zeros(fine.clone(), Rank::Scalar);
    for i in 0..fine.len() {
        xf.values_mut()[i] = xi_at(&fine.point(i))?;
    }
    let g1 = grid::gradient(&xf)?;
    let g2 = grid::gradient(&g1)?;
    let norm1 = (0..fine.len()).fold(0.0f64, |m, i| m.max(g1.norm_at(i)));
    let norm2 = (0..fine.len()).fold(0.0f64, |m, i| m.max(g2.norm_at(i)));
    Ok(CutoffSpec {
        cube: cube.clone(),
        xi,
        norm1,
        norm2,
    })
}

/// Difference-quotient quantities for one axis and shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangEntry {
    pub k: usize,
    pub h: f64,
    /// `h_g² Σ ξ² |d⁺_{h,k} F(Du)|²`.
    pub f_quotient: f64,
    /// `h_g² Σ φ(ξ |∇ d⁺_{h,k} u|)`.
    pub phi_quotient: f64,
}

/// Interior regularity measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    /// `h_g² Σ_{½Q} |∇F(Du)|²`, with trapezoid weights on the faces.
    pub lhs: f64,
    /// `h_g² Σ_Q (φ*(|f|) + φ(|∇u|))`, with trapezoid weights on the faces.
    pub rhs: f64,
    pub ratio: f64,
    pub tang: Vec<TangEntry>,
    /// Largest `max_h / min_h` of either quantity over the shifts, per axis.
    pub tang_spread: f64,
    pub cutoff_norm1: f64,
    pub cutoff_norm2: f64,
}

/// Trapezoid weight of `x` in the closed cube: halved per axis on a face.
fn cube_weight(cube: &Cube, x: &[f64], h: f64) -> f64 {
    let r = 0.5 * cube.side();
    let mut w = 1.0;
    for (xk, ck) in x.iter().zip(cube.center()) {
        let d = (xk - ck).abs() - r;
        if d.abs() < 1e-9 * h {
            w *= 0.5;
        } else if d > 0.0 {
            return 0.0;
        }
    }
    w
}

/// `Σ_k |∂_k F|²` at every point, for fields of any rank.
fn gradient_norm_sq(field: &Field) -> Result<Vec<f64>> {
    let mut out = vec![0.0; field.len()];
    for k in 0..field.grid().dim() {
        let d = grid::partial(field, k)?;
        for (o, v) in out.iter_mut().zip(d.values().chunks(field.ncomp())) {
            *o += v.iter().map(|x| x * x).sum::<f64>();
        }
    }
    Ok(out)
}

pub fn interior_regularity_check(
    solution: &PStokesSolution,
    problem: &PStokesProblem,
    cutoff: &CutoffSpec,
    hs: &[f64],
) -> Result<RegularityReport> {
    let g = problem.grid();
    let q = &cutoff.cube;
    if cutoff.xi.grid() != g {
        bail!(Shape, "cutoff lives on a different grid");
    }
    if hs.iter().any(|&h| h >= 0.25 * q.side()) {
        bail!(
            Domain,
            "shifts must be below a quarter of the cube side {}",
            q.side()
        );
    }
    let model = problem.model();
    let nf = &model.nf;
    let vol = g.cell_volume();
    let half = q.scaled(0.5)?;
    let grad_f = gradient_norm_sq(&solution.f_du)?;
    let grad_u = grid::gradient(&solution.u)?;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..g.len() {
        let x = g.point(i);
        let a = cube_weight(&half, &x, g.spacing());
        if a > 0.0 {
            lhs += a * grad_f[i];
        }
        let b = cube_weight(q, &x, g.spacing());
        if b > 0.0 {
            rhs += b * (nf.conjugate(problem.f.norm_at(i))? + nf.value(grad_u.norm_at(i)));
        }
    }
    lhs *= vol;
    rhs *= vol;
    let xi = cutoff.xi.values();
    let mut tang = Vec::new();
    let mut spread: f64 = 1.0;
    for k in 0..2 {
        let mut fq = Vec::new();
        let mut pq = Vec::new();
        for &h in hs {
            let dq_f = grid::diff_quot(&solution.f_du, k, h, Sign::Plus)?;
            let dq_u = grid::gradient(&grid::diff_quot(&solution.u, k, h, Sign::Plus)?)?;
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..g.len() {
                let n = dq_f.norm_at(i);
                a += xi[i] * xi[i] * n * n;
                b += nf.value(xi[i] * dq_u.norm_at(i));
            }
            tang.push(TangEntry {
                k,
                h,
                f_quotient: a * vol,
                phi_quotient: b * vol,
            });
            fq.push(a);
            pq.push(b);
        }
        for v in [&fq, &pq] {
            let hi = v.iter().fold(0.0f64, |m, &x| m.max(x));
            let lo = v.iter().fold(f64::INFINITY, |m, &x| m.min(x));
            if hi > 0.0 {
                spread = spread.max(hi / lo);
            }
        }
    }
    Ok(RegularityReport {
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
        tang,
        tang_spread: spread,
        cutoff_norm1: cutoff.norm1,
        cutoff_norm2: cutoff.norm2,
    })
}
