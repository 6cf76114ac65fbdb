//! Symmetric banded matrices and their Cholesky factor.

use crate::error::{Error, Result};

/// Symmetric matrix stored as its lower band, row-major.
///
/// Row `r` holds columns `r - bw ..= r` at offsets `0 ..= bw`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn offset(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && r - c <= self.bw, "({r},{c}) outside band {}", self.bw);
        r * (self.bw + 1) + self.bw + c - r
    }

    /// Entry `(r, c)` of the symmetric matrix; zero outside the band.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.offset(r, c)]
        }
    }

    /// Adds `v` to the symmetric pair `(r, c)` / `(c, r)`.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        let o = self.offset(r, c);
        self.data[o] += v;
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.n {
            let lo = r.saturating_sub(self.bw);
            let row = &self.data[r * (self.bw + 1)..(r + 1) * (self.bw + 1)];
            let mut acc = 0.0;
            for c in lo..r {
                let a = row[self.bw + c - r];
                acc += a * x[c];
                y[c] += a * x[r];
            }
            acc += row[self.bw] * x[r];
            y[r] += acc;
        }
    }

    /// Congruence `S A S` with diagonal `S`.
    pub fn scale_symmetric(&mut self, s: &[f64]) {
        for r in 0..self.n {
            let lo = r.saturating_sub(self.bw);
            for c in lo..=r {
                let o = self.offset(r, c);
                self.data[o] *= s[r] * s[c];
            }
        }
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let bw = self.bw;
        let w = bw + 1;
        let mut l = self.data.clone();
        for j in 0..self.n {
            let lo_j = j.saturating_sub(bw);
            // diagonal
            let mut d = l[j * w + bw];
            for k in lo_j..j {
                let v = l[j * w + bw + k - j];
                d -= v * v;
            }
            if !(d > 0.0) {
                return Err(Error::Factorization { jitter: 0.0 });
            }
            let d = d.sqrt();
            l[j * w + bw] = d;
            let hi = (j + bw).min(self.n - 1);
            for i in j + 1..=hi {
                let lo = i.saturating_sub(bw).max(lo_j);
                let mut s = l[i * w + bw + j - i];
                for k in lo..j {
                    s -= l[i * w + bw + k - i] * l[j * w + bw + k - j];
                }
                l[i * w + bw + j - i] = s / d;
            }
        }
        Ok(BandCholesky { n: self.n, bw, l })
    }
}

/// Lower-triangular banded factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.l[i * w..(i + 1) * w];
            let mut s = x[i];
            for k in lo..i {
                s -= row[self.bw + k - i] * x[k];
            }
            x[i] = s / row[self.bw];
        }
        for i in (0..self.n).rev() {
            x[i] /= self.l[i * w + self.bw];
            let xi = x[i];
            let lo = i.saturating_sub(self.bw);
            let row = &self.l[i * w..(i + 1) * w];
            for k in lo..i {
                x[k] -= row[self.bw + k - i] * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn sample(n: usize, bw: usize) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, bw);
        for r in 0..n {
            a.add(r, r, 4.0 + r as f64 * 0.1);
            for c in r.saturating_sub(bw)..r {
                a.add(r, c, 0.3 / (1.0 + (r - c) as f64) - 0.05 * ((r + c) % 3) as f64);
            }
        }
        a
    }

    #[test]
    fn band_solve_matches_dense_solve() {
        let (n, bw) = (40, 5);
        let a = sample(n, bw);
        let dense = DMatrix::from_fn(n, n, |r, c| a.get(r, c));
        let b = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin());
        let expect = dense.clone().cholesky().unwrap().solve(&b);
        let mut x: Vec<f64> = b.iter().copied().collect();
        a.cholesky().unwrap().solve_in_place(&mut x);
        for i in 0..n {
            assert!((x[i] - expect[i]).abs() < 1e-12);
        }
        let mut y = vec![0.0; n];
        a.mul_vec(&x, &mut y);
        for i in 0..n {
            assert!((y[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = BandMatrix::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, -1.0);
        a.add(2, 2, 1.0);
        assert!(a.cholesky().is_err());
    }
}
