//! Dense complex matrices, row-major storage.
//!
//! This is the carrier type for every operator in the library: single-particle
//! Hamiltonians, pair potentials, observable kernels, density matrices, and
//! their symmetric-subspace restrictions. All shapes are small enough that a
//! straightforward dense representation wins over anything cleverer.

use num_complex::Complex64 as C64;
use std::ops::{Index, IndexMut};

use crate::error::{CoreError, Result};

/// Default cap on the number of complex entries a single matrix may hold.
pub const DEFAULT_ELEMENT_CAP: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Diagonal square matrix from complex entries.
    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    /// Diagonal square matrix from real entries.
    pub fn diag_real(entries: &[f64]) -> Self {
        let v: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::diag(&v)
    }

    /// Row-major construction from interleaved (re, im) pairs.
    pub fn from_interleaved(rows: usize, cols: usize, raw: &[f64]) -> Result<Self> {
        if raw.len() != 2 * rows * cols {
            return Err(CoreError::Shape(format!(
                "expected {} interleaved floats for a {}x{} matrix, got {}",
                2 * rows * cols,
                rows,
                cols,
                raw.len()
            )));
        }
        let data = raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        let data = self.data.iter().map(|z| z.conj()).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square(), "trace of a non-square matrix");
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        let data = self.data.iter().map(|z| z * s).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch in add");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch in sub");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn add_assign_scaled(&mut self, other: &Self, s: C64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "shape mismatch in mul");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow_len = other.cols;
            let out_row = &mut out.data[i * orow_len..(i + 1) * orow_len];
            for (k, &aik) in arow.iter().enumerate() {
                if aik.norm_sqr() == 0.0 {
                    continue;
                }
                let brow = other.row(k);
                for j in 0..orow_len {
                    out_row[j] += aik * brow[j];
                }
            }
        }
        out
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "shape mismatch in mul_vec");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, x)| a * x).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Max-norm of M - M^dagger; zero for Hermitian matrices.
    pub fn hermiticity_residual(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                let r = (self[(i, j)] - self[(j, i)].conj()).norm();
                worst = worst.max(r);
            }
        }
        worst
    }

    /// Errors unless M is Hermitian to `tol` relative to its magnitude.
    pub fn require_hermitian(&self, tol: f64) -> Result<()> {
        let scale = self.max_abs().max(1.0);
        let r = self.hermiticity_residual();
        if r > tol * scale {
            return Err(CoreError::NotHermitian(r));
        }
        Ok(())
    }

    /// (M + M^dagger) / 2.
    pub fn hermitian_part(&self) -> Self {
        self.add(&self.dagger()).scale(C64::new(0.5, 0.0))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn mul_against_hand_computation() {
        let a = ComplexMatrix::from_fn(2, 2, |i, j| c((i * 2 + j) as f64, 1.0));
        let b = ComplexMatrix::identity(2).scale(c(2.0, 0.0));
        let ab = a.mul(&b);
        assert_eq!(ab[(1, 0)], c(4.0, 2.0));
        assert_eq!(ab[(0, 1)], c(2.0, 2.0));
    }

    #[test]
    fn dagger_is_involutive() {
        let a = ComplexMatrix::from_fn(3, 2, |i, j| c(i as f64, j as f64 + 0.5));
        assert_eq!(a.dagger().dagger(), a);
    }

    #[test]
    fn hermiticity_residual_detects_skew() {
        let mut a = ComplexMatrix::identity(2);
        a[(0, 1)] = c(0.0, 1.0);
        a[(1, 0)] = c(0.0, 1.0); // conj would need -i
        assert!(a.hermiticity_residual() > 1.0);
        assert!(a.hermitian_part().hermiticity_residual() < 1e-15);
    }
}
