//! Banded symmetric positive definite matrices and their Cholesky factors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;

/// Lower band of a symmetric `n × n` matrix with half-bandwidth `bw`;
/// entry `(i, j)` with `i - bw ≤ j ≤ i` is stored at `i * (bw + 1) + (j + bw - i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            None
        } else {
            Some(i * (self.bw + 1) + (j + self.bw - i))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` to entry `(i, j)` (and its mirror).
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        match self.slot(i, j) {
            Some(s) => {
                self.data[s] += v;
                Ok(())
            }
            None => bail!(Shape, "entry ({i}, {j}) lies outside the band {}", self.bw),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[i * (self.bw + 1) + (j + self.bw - i)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// In-place Cholesky factorization `A = L Lᵀ`.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let kl = lo.max(j.saturating_sub(bw));
                let mut s = self.data[i * w + (j + bw - i)];
                for k in kl..j {
                    s -= self.data[i * w + (k + bw - i)] * self.data[j * w + (k + bw - j)];
                }
                if j == i {
                    if !(s > 0.0) {
                        bail!(Singular, "matrix is not positive definite at row {i}");
                    }
                    self.data[i * w + bw] = math::sqrt(s);
                } else {
                    self.data[i * w + (j + bw - i)] = s / self.data[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

/// Lower-triangular banded factor.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedCholesky {
    l: BandedSym,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let (n, bw) = (self.l.n, self.l.bw);
        if b.len() != n {
            bail!(
                Shape,
                "right-hand side has length {} but the matrix has size {n}",
                b.len()
            );
        }
        let w = bw + 1;
        let d = &self.l.data;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for k in lo..i {
                s -= d[i * w + (k + bw - i)] * y[k];
            }
            y[i] = s / d[i * w + bw];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = y[i];
            for k in i + 1..=hi {
                s -= d[k * w + (i + bw - k)] * y[k];
            }
            y[i] = s / d[i * w + bw];
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_laplacian() {
        let n = 50;
        let mut a = BandedSym::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0).unwrap();
            if i > 0 {
                a.add(i, i - 1, -1.0).unwrap();
            }
        }
        let x: Vec<f64> = (0..n).map(|i| math::sin(i as f64)).collect();
        let b = a.mul_vec(&x);
        let y = a.cholesky().unwrap().solve(&b).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn wide_band_matches_multiplication() {
        let (n, bw) = (40, 6);
        let mut a = BandedSym::zeros(n, bw);
        for i in 0..n {
            a.add(i, i, 20.0).unwrap();
            for j in i.saturating_sub(bw)..i {
                a.add(i, j, math::cos((i * 7 + j) as f64)).unwrap();
            }
        }
        let x: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let b = a.mul_vec(&x);
        let y = a.cholesky().unwrap().solve(&b).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_and_out_of_band() {
        let mut a = BandedSym::zeros(3, 1);
        assert!(a.add(2, 0, 1.0).is_err());
        a.add(0, 0, -1.0).unwrap();
        assert!(a.cholesky().is_err());
    }
}
