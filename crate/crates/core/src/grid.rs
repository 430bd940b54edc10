//! Uniform grids on boxes, scalar/vector/tensor fields sampled on them, and
//! the discrete calculus of difference quotients.
//!
//! Fields are extended by zero outside the grid. Shifts in difference
//! quotients are restricted to integer multiples of the grid spacing.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;
use crate::nfunc::NFunction;

/// Points `origin + i * spacing` for `i` in `0..dims[k]` along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    origin: Vec<f64>,
    spacing: f64,
    dims: Vec<usize>,
    strides: Vec<usize>,
}

impl UniformGrid {
    pub fn new(origin: &[f64], spacing: f64, dims: &[usize]) -> Result<Self> {
        if origin.is_empty() || origin.len() != dims.len() {
            bail!(
                Shape,
                "origin has {} coordinates but dims has {}",
                origin.len(),
                dims.len()
            );
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            bail!(Domain, "grid spacing must be positive, got {spacing}");
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            bail!(Domain, "every axis needs at least 2 points, got {d}");
        }
        let n = dims.len();
        let mut strides = vec![1; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        Ok(Self {
            origin: origin.to_vec(),
            spacing,
            dims: dims.to_vec(),
            strides,
        })
    }

    /// Midpoint grid of `cells` cells per axis on the cube `lo + [0, side]^n`.
    pub fn cell_centered(lo: &[f64], side: f64, cells: usize) -> Result<Self> {
        let h = side / cells as f64;
        let origin: Vec<f64> = lo.iter().map(|x| x + 0.5 * h).collect();
        Self::new(&origin, h, &vec![cells; lo.len()])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^n`, the quadrature weight of one point.
    pub fn cell_volume(&self) -> f64 {
        math::powi(self.spacing, self.dim() as i32)
    }

    /// Coordinate of point `lin` along axis `k`, as an index.
    #[inline]
    pub fn axis_index(&self, lin: usize, k: usize) -> usize {
        (lin / self.strides[k]) % self.dims[k]
    }

    pub fn multi_index(&self, lin: usize) -> Vec<usize> {
        (0..self.dim()).map(|k| self.axis_index(lin, k)).collect()
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn point_into(&self, lin: usize, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.origin[k] + self.axis_index(lin, k) as f64 * self.spacing;
        }
    }

    pub fn point(&self, lin: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.point_into(lin, &mut x);
        x
    }

    /// Index of the point shifted by `steps` along axis `k`, if it stays on the grid.
    #[inline]
    pub fn shifted(&self, lin: usize, k: usize, steps: isize) -> Option<usize> {
        let i = self.axis_index(lin, k) as isize + steps;
        if i < 0 || i >= self.dims[k] as isize {
            None
        } else {
            Some((lin as isize + steps * self.strides[k] as isize) as usize)
        }
    }

    /// Converts a shift length into a whole number of grid steps.
    pub fn steps_for(&self, h: f64) -> Result<usize> {
        if !(h > 0.0) {
            bail!(Domain, "shift h must be positive, got {h}");
        }
        let r = h / self.spacing;
        let s = math::round(r);
        if (r - s).abs() > 1e-9 * r.max(1.0) || s < 1.0 {
            bail!(
                Domain,
                "shift h = {h} is not an integer multiple of the grid spacing {}",
                self.spacing
            );
        }
        Ok(s as usize)
    }

    /// Distance from point `lin` to the boundary of the grid box. With
    /// `cell_faces` the box reaches half a spacing past the outermost points.
    fn box_distance(&self, lin: usize, cell_faces: bool) -> f64 {
        let pad = if cell_faces { 0.5 } else { 0.0 };
        (0..self.dim())
            .map(|k| {
                let i = self.axis_index(lin, k) as f64;
                let last = (self.dims[k] - 1) as f64;
                (i + pad).min(last - i + pad) * self.spacing
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Tensor rank of a field's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    Vector,
    Tensor,
}

impl Rank {
    pub fn components(self, n: usize) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => n,
            Rank::Tensor => n * n,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Rank::Scalar => 0,
            Rank::Vector => 1,
            Rank::Tensor => 2,
        }
    }

    pub fn from_u8(r: u8) -> Option<Self> {
        match r {
            0 => Some(Rank::Scalar),
            1 => Some(Rank::Vector),
            2 => Some(Rank::Tensor),
            _ => None,
        }
    }
}

/// Direction of a difference quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_isize(self) -> isize {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

/// Values of rank `rank` at every point of a grid, component-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: UniformGrid,
    rank: Rank,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: UniformGrid, rank: Rank) -> Self {
        let len = grid.len() * rank.components(grid.dim());
        Self {
            grid,
            rank,
            values: vec![0.0; len],
        }
    }

    pub fn from_values(grid: UniformGrid, rank: Rank, values: Vec<f64>) -> Result<Self> {
        let want = grid.len() * rank.components(grid.dim());
        if values.len() != want {
            bail!(Shape, "expected {want} values, got {}", values.len());
        }
        Ok(Self { grid, rank, values })
    }

    pub fn scalar_from_fn<F: FnMut(&[f64]) -> f64>(grid: UniformGrid, mut f: F) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut x);
                f(&x)
            })
            .collect();
        Self {
            grid,
            rank: Rank::Scalar,
            values,
        }
    }

    /// Builds a field by writing each point's components into `out`.
    pub fn from_fn<F: FnMut(&[f64], &mut [f64])>(grid: UniformGrid, rank: Rank, mut f: F) -> Self {
        let nc = rank.components(grid.dim());
        let mut field = Self::zeros(grid, rank);
        let mut x = vec![0.0; field.grid.dim()];
        for i in 0..field.grid.len() {
            field.grid.point_into(i, &mut x);
            f(&x, &mut field.values[i * nc..(i + 1) * nc]);
        }
        field
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn ncomp(&self) -> usize {
        self.rank.components(self.grid.dim())
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, lin: usize) -> &[f64] {
        let nc = self.ncomp();
        &self.values[lin * nc..(lin + 1) * nc]
    }

    pub fn at_mut(&mut self, lin: usize) -> &mut [f64] {
        let nc = self.ncomp();
        &mut self.values[lin * nc..(lin + 1) * nc]
    }

    /// Component `c` at point `lin`, or zero for points off the grid.
    #[inline]
    pub fn get(&self, lin: Option<usize>, c: usize) -> f64 {
        match lin {
            Some(i) => self.values[i * self.ncomp() + c],
            None => 0.0,
        }
    }

    /// Euclidean (Frobenius for tensors) norm of the value at `lin`.
    pub fn norm_at(&self, lin: usize) -> f64 {
        math::norm(self.at(lin))
    }

    pub fn component(&self, c: usize) -> Field {
        let nc = self.ncomp();
        Field {
            grid: self.grid.clone(),
            rank: Rank::Scalar,
            values: (0..self.len()).map(|i| self.values[i * nc + c]).collect(),
        }
    }

    pub fn map_points<F: FnMut(&[f64], &mut [f64])>(&self, rank: Rank, mut f: F) -> Field {
        let mut out = Field::zeros(self.grid.clone(), rank);
        let nc = self.ncomp();
        let mc = out.ncomp();
        for i in 0..self.len() {
            f(
                &self.values[i * nc..(i + 1) * nc],
                &mut out.values[i * mc..(i + 1) * mc],
            );
        }
        out
    }

    pub fn scale(&self, a: f64) -> Field {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (o, w) in out.values.iter_mut().zip(&other.values) {
            *o = a * *o + b * w;
        }
        Ok(out)
    }

    pub fn check_same(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid || self.rank != other.rank {
            bail!(
                Shape,
                "fields live on different grids or have different ranks"
            );
        }
        Ok(())
    }

    /// `Σ_x v(x) h^n` per component.
    pub fn integral(&self) -> Vec<f64> {
        let nc = self.ncomp();
        let vol = self.grid.cell_volume();
        let mut s = vec![0.0; nc];
        for (i, v) in self.values.iter().enumerate() {
            s[i % nc] += v;
        }
        s.iter_mut().for_each(|x| *x *= vol);
        s
    }

    /// Discrete `L^p` norm `(Σ |v|^p h^n)^{1/p}`, optionally weighted.
    pub fn lp_norm(&self, p: f64, weight: Option<&[f64]>) -> f64 {
        let vol = self.grid.cell_volume();
        let s: f64 = (0..self.len())
            .map(|i| {
                let w = weight.map_or(1.0, |w| w[i]);
                math::powf(self.norm_at(i), p) * w
            })
            .sum();
        math::powf(s * vol, 1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `d^±_{h,k} F(x) = (F(x ± h e_k) - F(x)) / h`, zero-extended.
pub fn diff_quot(field: &Field, k: usize, h: f64, sign: Sign) -> Result<Field> {
    let g = field.grid();
    if k >= g.dim() {
        bail!(
            Domain,
            "axis {k} out of range for a {}-dimensional grid",
            g.dim()
        );
    }
    let s = g.steps_for(h)? as isize * sign.as_isize();
    let nc = field.ncomp();
    let mut out = Field::zeros(g.clone(), field.rank());
    for i in 0..g.len() {
        let j = g.shifted(i, k, s);
        for c in 0..nc {
            out.values[i * nc + c] = (field.get(j, c) - field.values[i * nc + c]) / h;
        }
    }
    Ok(out)
}

/// `Δ^±_{h,k} F = h d^±_{h,k} F`.
pub fn increment(field: &Field, k: usize, h: f64, sign: Sign) -> Result<Field> {
    Ok(diff_quot(field, k, h, sign)?.scale(h))
}

/// Derivative of every component along axis `k`: centered in the interior,
/// second-order one-sided on the two boundary layers.
pub fn partial(field: &Field, k: usize) -> Result<Field> {
    let g = field.grid();
    if k >= g.dim() {
        bail!(
            Domain,
            "axis {k} out of range for a {}-dimensional grid",
            g.dim()
        );
    }
    let nc = field.ncomp();
    let h = g.spacing();
    let dk = g.dims()[k];
    let st = g.strides()[k];
    let mut out = Field::zeros(g.clone(), field.rank());
    let v = &field.values;
    for i in 0..g.len() {
        let a = g.axis_index(i, k);
        for c in 0..nc {
            let at = |off: isize| v[((i as isize + off * st as isize) as usize) * nc + c];
            out.values[i * nc + c] = if a > 0 && a + 1 < dk {
                (at(1) - at(-1)) / (2.0 * h)
            } else if dk < 3 {
                if a == 0 {
                    (at(1) - at(0)) / h
                } else {
                    (at(0) - at(-1)) / h
                }
            } else if a == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else {
                (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
            };
        }
    }
    Ok(out)
}

/// Gradient: scalar → vector (`∂_k F`), vector → tensor (`(∇u)_{ij} = ∂_j u_i`).
pub fn gradient(field: &Field) -> Result<Field> {
    let g = field.grid();
    let n = g.dim();
    let rank = match field.rank() {
        Rank::Scalar => Rank::Vector,
        Rank::Vector => Rank::Tensor,
        Rank::Tensor => bail!(Shape, "gradient of a tensor field is not supported"),
    };
    let parts: Vec<Field> = (0..n).map(|k| partial(field, k)).collect::<Result<_>>()?;
    let nc = field.ncomp();
    let mut out = Field::zeros(g.clone(), rank);
    for i in 0..g.len() {
        for c in 0..nc {
            for (k, pk) in parts.iter().enumerate() {
                out.values[(i * nc + c) * n + k] = pk.values[i * nc + c];
            }
        }
    }
    Ok(out)
}

/// `Du = ½(∇u + ∇uᵀ)`.
pub fn sym_gradient(u: &Field) -> Result<Field> {
    if u.rank() != Rank::Vector {
        bail!(Shape, "symmetric gradient needs a vector field");
    }
    let grad = gradient(u)?;
    let n = u.grid().dim();
    Ok(grad.map_points(Rank::Tensor, |a, out| {
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
            }
        }
    }))
}

pub fn divergence(u: &Field) -> Result<Field> {
    if u.rank() != Rank::Vector {
        bail!(Shape, "divergence needs a vector field");
    }
    let n = u.grid().dim();
    let mut out = Field::zeros(u.grid().clone(), Rank::Scalar);
    for k in 0..n {
        let d = partial(&u.component(k), k)?;
        for (o, v) in out.values.iter_mut().zip(&d.values) {
            *o += v;
        }
    }
    Ok(out)
}

/// `u = (∂₂ψ, -∂₁ψ)` for a scalar `ψ` on a 2D grid.
pub fn curl2d(psi: &Field) -> Result<Field> {
    if psi.rank() != Rank::Scalar || psi.grid().dim() != 2 {
        bail!(Shape, "curl2d needs a scalar field on a 2D grid");
    }
    let d1 = partial(psi, 0)?;
    let d2 = partial(psi, 1)?;
    let mut out = Field::zeros(psi.grid().clone(), Rank::Vector);
    for i in 0..psi.len() {
        out.values[2 * i] = d2.values[i];
        out.values[2 * i + 1] = -d1.values[i];
    }
    Ok(out)
}

/// True when point `lin` is at least `margin` points away from every face.
pub fn is_inner(grid: &UniformGrid, lin: usize, margin: usize) -> bool {
    (0..grid.dim()).all(|k| {
        let a = grid.axis_index(lin, k);
        a >= margin && a + margin < grid.dims()[k]
    })
}

/// `max |∇(d^± F) - d^±(∇F)|` over points where both sides use centered
/// stencils only.
pub fn commute_check(field: &Field, k: usize, h: f64, sign: Sign) -> Result<f64> {
    let g = field.grid();
    let s = g.steps_for(h)? as isize * sign.as_isize();
    let lhs = gradient(&diff_quot(field, k, h, sign)?)?;
    let rhs = diff_quot(&gradient(field)?, k, h, sign)?;
    let nc = lhs.ncomp();
    let mut dev = 0.0f64;
    for i in 0..g.len() {
        if !is_inner(g, i, 1) {
            continue;
        }
        match g.shifted(i, k, s) {
            Some(j) if is_inner(g, j, 1) => {}
            _ => continue,
        }
        for c in 0..nc {
            dev = dev.max((lhs.values[i * nc + c] - rhs.values[i * nc + c]).abs());
        }
    }
    Ok(dev)
}

/// `max |d^±(FG) - F(x ± h e_k) d^± G - d^± F G|` for scalar fields.
pub fn product_rule_check(f: &Field, g: &Field, k: usize, h: f64, sign: Sign) -> Result<f64> {
    f.check_same(g)?;
    if f.rank() != Rank::Scalar {
        bail!(Shape, "product rule check works on scalar fields");
    }
    let grid = f.grid();
    let s = grid.steps_for(h)? as isize * sign.as_isize();
    let prod = Field::from_values(
        grid.clone(),
        Rank::Scalar,
        f.values.iter().zip(&g.values).map(|(a, b)| a * b).collect(),
    )?;
    let dfg = diff_quot(&prod, k, h, sign)?;
    let df = diff_quot(f, k, h, sign)?;
    let dg = diff_quot(g, k, h, sign)?;
    let mut dev = 0.0f64;
    for i in 0..grid.len() {
        let fs = f.get(grid.shifted(i, k, s), 0);
        let r = dfg.values[i] - fs * dg.values[i] - df.values[i] * g.values[i];
        dev = dev.max(r.abs());
    }
    Ok(dev)
}

/// `|Σ F d⁺G - Σ d⁻F G| h^n` for fields vanishing on a margin of `h`
/// along axis `k`.
pub fn partial_integration_check(f: &Field, g: &Field, k: usize, h: f64) -> Result<f64> {
    f.check_same(g)?;
    let grid = f.grid();
    let s = grid.steps_for(h)?;
    let nc = f.ncomp();
    for i in 0..grid.len() {
        let a = grid.axis_index(i, k);
        if (a < s || a + s >= grid.dims()[k]) && f.at(i).iter().chain(g.at(i)).any(|v| *v != 0.0) {
            bail!(
                Precondition,
                "fields must vanish within {s} points of the boundary along axis {k}"
            );
        }
    }
    let dg = diff_quot(g, k, h, Sign::Plus)?;
    let df = diff_quot(f, k, h, Sign::Minus)?;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for idx in 0..grid.len() * nc {
        lhs += f.values[idx] * dg.values[idx];
        rhs += df.values[idx] * g.values[idx];
    }
    Ok((lhs - rhs).abs() * grid.cell_volume())
}

/// Both sides of the modular inequality for difference quotients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqInequality {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Compares `Σ_{E_{h0}} ψ(|d^± F|) h^n` with `Σ_E ψ(|∂_k F|) h^n` where `E`
/// is the open box spanned by the grid cells and `E_{h0}` its points at
/// distance more than `h0` from the boundary. `F` and `∂_k F` are given
/// analytically.
#[allow(clippy::too_many_arguments)]
pub fn modular_dq_inequality<N, F, D>(
    psi: &N,
    grid: &UniformGrid,
    f: F,
    df: D,
    k: usize,
    h: f64,
    h0: f64,
    sign: Sign,
) -> Result<DqInequality>
where
    N: NFunction + ?Sized,
    F: Fn(&[f64]) -> f64,
    D: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h <= h0) {
        bail!(Domain, "need 0 < h <= h0, got h = {h}, h0 = {h0}");
    }
    if k >= grid.dim() {
        bail!(Domain, "axis {k} out of range");
    }
    grid.steps_for(h)?;
    let vol = grid.cell_volume();
    let mut x = vec![0.0; grid.dim()];
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut inner = 0usize;
    for i in 0..grid.len() {
        grid.point_into(i, &mut x);
        rhs += psi.value(df(&x).abs()) * vol;
        if grid.box_distance(i, true) > h0 {
            inner += 1;
            let f0 = f(&x);
            x[k] += sign.as_isize() as f64 * h;
            let f1 = f(&x);
            lhs += psi.value(((f1 - f0) / h).abs()) * vol;
        }
    }
    if inner == 0 {
        bail!(Domain, "the inner set E_h0 is empty for h0 = {h0}");
    }
    let tol = 1e-3 * rhs;
    Ok(DqInequality {
        lhs,
        rhs,
        pass: lhs <= rhs + tol,
    })
}
