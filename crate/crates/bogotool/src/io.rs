//! Field and cube files.
//!
//! Field CSV: one row per grid point in linear-index order, the coordinates
//! `x0..` followed by the components, named `f` for a scalar, `v0..` for a
//! vector and `t00..` for a tensor.
//!
//! Field binary (little endian): magic `BGF1`, `u32` dimension `n`, `n`
//! `u64` point counts, `f64` spacing, `n` `f64` origin coordinates, `u8`
//! rank (0 scalar, 1 vector, 2 tensor), then the values as `f64` in
//! row-major order, components fastest.
//!
//! Cube CSV: columns `level, j1..jn`; the cube is `2^level (j + [0,1)^n)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bogotool_core::whitney::DyadicCube;
use bogotool_core::{Field, Rank, UniformGrid};

const MAGIC: &[u8; 4] = b"BGF1";

fn component_names(n: usize, rank: Rank) -> Vec<String> {
    match rank {
        Rank::Scalar => vec!["f".to_string()],
        Rank::Vector => (0..n).map(|i| format!("v{i}")).collect(),
        Rank::Tensor => (0..n)
            .flat_map(|i| (0..n).map(move |j| format!("t{i}{j}")))
            .collect(),
    }
}

pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    let g = field.grid();
    let n = g.dim();
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    let mut header: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
    header.extend(component_names(n, field.rank()));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..g.len() {
        row.clear();
        row.extend(g.point(i).iter().map(|x| x.to_string()));
        row.extend(field.at(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_csv(path: &Path) -> Result<Field> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let n = header.iter().take_while(|h| h.starts_with('x')).count();
    if n == 0 {
        bail!("{}: no coordinate columns x0..", path.display());
    }
    let names = &header[n..];
    let rank = [Rank::Scalar, Rank::Vector, Rank::Tensor]
        .into_iter()
        .find(|&rank| component_names(n, rank) == names)
        .ok_or_else(|| {
            anyhow!(
                "{}: unrecognized component columns {names:?}",
                path.display()
            )
        })?;
    let mut coords: Vec<Vec<f64>> = Vec::new();
    let mut comps: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}: row {}", path.display(), line + 2))?;
        if vals.len() != header.len() {
            bail!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                line + 2,
                vals.len(),
                header.len()
            );
        }
        coords.push(vals[..n].to_vec());
        comps.push(vals[n..].to_vec());
    }
    let grid = infer_grid(&coords)
        .with_context(|| format!("{}: points do not form a uniform grid", path.display()))?;
    if grid.len() != coords.len() {
        bail!(
            "{}: {} rows for a grid of {} points",
            path.display(),
            coords.len(),
            grid.len()
        );
    }
    let nc = rank.components(n);
    let mut values = vec![f64::NAN; grid.len() * nc];
    let h = grid.spacing();
    for (x, c) in coords.iter().zip(&comps) {
        let idx: Vec<usize> = (0..n)
            .map(|k| ((x[k] - grid.origin()[k]) / h).round() as usize)
            .collect();
        let lin = grid.linear_index(&idx);
        values[lin * nc..(lin + 1) * nc].copy_from_slice(c);
    }
    if values.iter().any(|v| v.is_nan()) {
        bail!("{}: duplicate grid points", path.display());
    }
    Ok(Field::from_values(grid, rank, values)?)
}

fn infer_grid(coords: &[Vec<f64>]) -> Result<UniformGrid> {
    let n = coords
        .first()
        .map(|c| c.len())
        .ok_or_else(|| anyhow!("no rows"))?;
    let mut origin = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    let mut spacing: Option<f64> = None;
    for k in 0..n {
        let mut xs: Vec<f64> = coords.iter().map(|c| c[k]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        if xs.len() < 2 {
            bail!("axis {k} has a single coordinate");
        }
        let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        for (i, x) in xs.iter().enumerate() {
            if (x - (xs[0] + i as f64 * h)).abs() > 1e-9 * h {
                bail!("axis {k} is not uniformly spaced");
            }
        }
        match spacing {
            Some(s) if (s - h).abs() > 1e-9 * s => {
                bail!("axes have different spacings {s} and {h}")
            }
            None => spacing = Some(h),
            _ => {}
        }
        origin.push(xs[0]);
        counts.push(xs.len());
    }
    Ok(UniformGrid::new(&origin, spacing.unwrap_or(1.0), &counts)?)
}

pub fn write_field_bin(path: &Path, field: &Field) -> Result<()> {
    let g = field.grid();
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(f);
    w.write_all(MAGIC)?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    for &d in g.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&g.spacing().to_le_bytes())?;
    for &x in g.origin() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&[field.rank().as_u8()])?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_bin(path: &Path) -> Result<Field> {
    let f = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        bail!("{}: not a field file", path.display());
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    if n == 0 || n > 8 {
        bail!("{}: bad dimension {n}", path.display());
    }
    let mut dims = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        dims.push(usize::try_from(u64::from_le_bytes(b8))?);
    }
    r.read_exact(&mut b8)?;
    let spacing = f64::from_le_bytes(b8);
    let mut origin = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        origin.push(f64::from_le_bytes(b8));
    }
    let mut b1 = [0u8; 1];
    r.read_exact(&mut b1)?;
    let rank =
        Rank::from_u8(b1[0]).ok_or_else(|| anyhow!("{}: bad rank {}", path.display(), b1[0]))?;
    let grid = UniformGrid::new(&origin, spacing, &dims)?;
    let count = grid.len() * rank.components(n);
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b8)
            .with_context(|| format!("{}: truncated", path.display()))?;
        values.push(f64::from_le_bytes(b8));
    }
    if r.read(&mut b1)? != 0 {
        bail!("{}: trailing bytes", path.display());
    }
    Ok(Field::from_values(grid, rank, values)?)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// CSV for a `.csv` extension, binary otherwise.
pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    if is_csv(path) {
        write_field_csv(path, field)
    } else {
        write_field_bin(path, field)
    }
}

pub fn read_field(path: &Path) -> Result<Field> {
    if is_csv(path) {
        read_field_csv(path)
    } else {
        read_field_bin(path)
    }
}

pub fn write_cubes_csv(path: &Path, cubes: &[DyadicCube]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    let n = cubes.first().map_or(0, |c| c.dim());
    let mut header = vec!["level".to_string()];
    header.extend((1..=n).map(|i| format!("j{i}")));
    w.write_record(&header)?;
    for c in cubes {
        let mut row = vec![c.level.to_string()];
        row.extend(c.index.iter().map(|j| j.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cubes_csv(path: &Path) -> Result<Vec<DyadicCube>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut it = rec.iter().map(str::trim);
        let level: i32 = it
            .next()
            .ok_or_else(|| anyhow!("empty row"))?
            .parse()
            .with_context(|| format!("{}: row {}", path.display(), line + 2))?;
        let index: Vec<i64> = it
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}: row {}", path.display(), line + 2))?;
        out.push(DyadicCube::new(level, index));
    }
    Ok(out)
}
