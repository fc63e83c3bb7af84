//! Small dense matrix containers and the spectral helpers the rest of the
//! crate needs (Hermitian PSD repair, symmetric square roots).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Outer product `u vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `uᵀ M v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            if ui != 0.0 {
                acc += ui * dot(self.row(i), v);
            }
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense row-major complex square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    /// Largest `|C - Cᴴ|` entry.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `ρᵀ C ρ` for a real vector, returned as a complex number so callers
    /// can inspect the (ideally zero) imaginary part.
    pub fn real_quadratic_form(&self, rho: &[f64]) -> Complex64 {
        let n = self.dim;
        let mut acc = Complex64::new(0.0, 0.0);
        for l in 0..n {
            if rho[l] == 0.0 {
                continue;
            }
            let mut row = Complex64::new(0.0, 0.0);
            for r in 0..n {
                row += self[(l, r)] * rho[r];
            }
            acc += row * rho[l];
        }
        acc
    }

    /// Real part as a real matrix. For Hermitian `C` this is symmetric and
    /// `ρᵀ Re(C) ρ = ρᵀ C ρ` for every real `ρ`.
    pub fn real_part(&self) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, j| self[(i, j)].re)
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

impl core::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Spectrum summary of a Hermitian matrix.
#[derive(Debug, Clone, Copy)]
pub struct Spectrum {
    pub min: f64,
    pub max_abs: f64,
}

pub fn hermitian_spectrum(c: &CMatrix) -> Spectrum {
    let sym = symmetrize(c);
    let eig = SymmetricEigen::new(sym.to_nalgebra());
    spectrum_of(eig.eigenvalues.iter().copied())
}

pub fn symmetric_spectrum(m: &Matrix) -> Spectrum {
    let eig = SymmetricEigen::new(m.to_nalgebra());
    spectrum_of(eig.eigenvalues.iter().copied())
}

fn spectrum_of(values: impl Iterator<Item = f64>) -> Spectrum {
    let mut min = f64::INFINITY;
    let mut max_abs: f64 = 0.0;
    for v in values {
        min = min.min(v);
        max_abs = max_abs.max(v.abs());
    }
    if min == f64::INFINITY {
        min = 0.0;
    }
    Spectrum { min, max_abs }
}

fn symmetrize(c: &CMatrix) -> CMatrix {
    let n = c.dim;
    let mut out = CMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = (c[(i, j)] + c[(j, i)].conj()) * 0.5;
        }
    }
    out
}

/// Hermitian symmetrization followed by clipping negative eigenvalues at 0.
/// Returns the repaired matrix and the smallest eigenvalue seen before clipping.
pub fn hermitian_psd_repair(c: &CMatrix) -> (CMatrix, f64) {
    let n = c.dim;
    let sym = symmetrize(c);
    if n == 0 {
        return (sym, 0.0);
    }
    let eig = SymmetricEigen::new(sym.to_nalgebra());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return (sym, min);
    }
    let mut out = CMatrix::zeros(n);
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(idx);
        for i in 0..n {
            let vi = v[i] * lambda;
            for j in 0..n {
                out[(i, j)] += vi * v[j].conj();
            }
        }
    }
    // keep the diagonal exactly real
    for i in 0..n {
        out[(i, i)].im = 0.0;
    }
    (out, min)
}

/// Principal square root of a symmetric PSD matrix; eigenvalues below zero are
/// floored at zero. Also returns the smallest eigenvalue before flooring.
pub fn symmetric_sqrt(m: &Matrix) -> (Matrix, f64) {
    let n = m.rows;
    if n == 0 {
        return (Matrix::zeros(0, 0), 0.0);
    }
    let half = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let eig = SymmetricEigen::new(half.to_nalgebra());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let mut out = Matrix::zeros(n, n);
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        let s = libm::sqrt(lambda);
        let v = eig.eigenvectors.column(idx);
        for i in 0..n {
            let vi = v[i] * s;
            for j in 0..n {
                out[(i, j)] += vi * v[j];
            }
        }
    }
    (out, min)
}
