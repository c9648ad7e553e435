use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Cholesky factor `Q = L L'` stored in envelope (skyline) form.
///
/// Row `i` of `L` keeps the contiguous segment `first[i]..=i`. Fill-in of a
/// symmetric matrix never leaves its lower envelope, so for a row-major
/// lattice the factor costs `O(J * cols^2)` and `O(J * cols)` storage.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors a symmetric matrix given as a diagonal plus, per row, the
    /// off-diagonal entries `(column, value)`. Only columns below the
    /// diagonal are read.
    pub fn factor(diag: &[f64], off: &[Vec<(usize, f64)>]) -> Result<Self> {
        let n = diag.len();
        let first: Vec<usize> = (0..n)
            .map(|i| off[i].iter().map(|&(k, _)| k).filter(|&k| k < i).min().unwrap_or(i))
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        let mut len = 0;
        for (i, &f) in first.iter().enumerate() {
            start.push(len);
            len += i - f + 1;
        }
        start.push(len);
        let mut values = vec![0.0; len];
        for i in 0..n {
            values[start[i] + i - first[i]] = diag[i];
            for &(k, v) in &off[i] {
                if k < i {
                    values[start[i] + k - first[i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = values[start[i] + j - fi];
                for k in lo..j {
                    s -= values[start[i] + k - fi] * values[start[j] + k - fj];
                }
                values[start[i] + j - fi] = s / values[start[j] + j - fj];
            }
            let mut d = values[start[i] + i - fi];
            for k in fi..i {
                let v = values[start[i] + k - fi];
                d -= v * v;
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite(i));
            }
            values[start[i] + i - fi] = d.sqrt();
        }
        Ok(Self { first, start, values })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        if j < self.first[i] || j > i {
            0.0
        } else {
            self.values[self.start[i] + j - self.first[i]]
        }
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.at(i, i).ln()).sum::<f64>()
    }

    /// Solves `L' x = z` in place.
    pub fn solve_upper_in_place(&self, x: &mut [f64]) {
        for i in (0..self.dim()).rev() {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (k, v) in (fi..i).zip(row) {
                x[k] -= v * xi;
            }
        }
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower_in_place(&self, x: &mut [f64]) {
        for i in 0..self.dim() {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let mut s = x[i];
            for (k, v) in (fi..i).zip(row) {
                s -= v * x[k];
            }
            x[i] = s / row[i - fi];
        }
    }

    /// Solves `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// Draw from `N(0, Q^{-1})`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.solve_upper_in_place(&mut x);
        x
    }

    pub fn to_dense_lower(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.at(i, j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, d: f64, o: f64) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
        let diag = vec![d; n];
        let off = (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push((i - 1, o));
                }
                if i + 1 < n {
                    v.push((i + 1, o));
                }
                v
            })
            .collect();
        (diag, off)
    }

    #[test]
    fn matches_dense_cholesky() {
        let (diag, off) = tridiag(6, 2.5, -1.0);
        let f = EnvelopeCholesky::factor(&diag, &off).unwrap();
        let mut q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag.clone()));
        for (i, row) in off.iter().enumerate() {
            for &(k, v) in row {
                q[(i, k)] = v;
            }
        }
        let dense = q.clone().cholesky().unwrap().l();
        assert!((f.to_dense_lower() - dense).abs().max() < 1e-12);
        let b: Vec<f64> = (0..6).map(|i| i as f64 - 2.0).collect();
        let x = f.solve(&b);
        let r = &q * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
        assert!(r.abs().max() < 1e-12);
    }

    #[test]
    fn indefinite_rejected() {
        let (diag, off) = tridiag(3, 1.0, -2.0);
        assert!(matches!(
            EnvelopeCholesky::factor(&diag, &off),
            Err(Error::NotPositiveDefinite(_))
        ));
    }
}
