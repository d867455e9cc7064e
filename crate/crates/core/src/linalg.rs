//! Dense column-major matrices and the SPD kernels every sampler is built on:
//! Cholesky factorization, triangular solves, log-determinants and
//! multivariate-normal draws.
//!
//! There is deliberately no inverse routine. Anything that looks like
//! `A⁻¹ B` is a pair of triangular solves against `chol(A)`.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::par;
use crate::rng::RandomStream;

/// Maximum relative asymmetry accepted by [`chol`]: `max|aᵢⱼ − aⱼᵢ| ≤ tol · max|a|`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Column block width of the blocked Cholesky factorization.
const CHOL_BLOCK: usize = 48;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("triangular matrix is singular: zero diagonal entry at {index}")]
    SingularTriangular { index: usize },
    #[error("matrix is not symmetric: max |a_ij - a_ji| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

fn mismatch(what: impl Into<String>) -> LinalgError {
    LinalgError::DimensionMismatch(what.into())
}

/// A dense `rows × cols` matrix stored column-major.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, " ")?;
            for j in 0..self.cols.min(8) {
                write!(f, " {:>12.6}", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    /// All-zero matrix. Panics on a zero dimension.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(mismatch("matrix dimensions must be positive"));
        }
        if rows * cols != data.len() {
            return Err(mismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if n_rows == 0 || n_cols == 0 {
            return Err(mismatch("matrix dimensions must be positive"));
        }
        let mut m = Self::zeros(n_rows, n_cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(mismatch(format!("row {i} has {} entries, expected {n_cols}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[i + j * rows] = f(i, j);
            }
        }
        m
    }

    /// `n × 1` matrix holding `v`.
    pub fn column_vector(v: Vec<f64>) -> Self {
        let n = v.len();
        assert!(n > 0, "matrix dimensions must be positive");
        Self { rows: n, cols: 1, data: v }
    }

    /// Horizontal concatenation `[a : b : …]`.
    pub fn hstack(blocks: &[&DenseMatrix]) -> Result<Self, LinalgError> {
        let rows = blocks.first().map(|b| b.rows).ok_or_else(|| mismatch("hstack of nothing"))?;
        let mut data = Vec::with_capacity(rows * blocks.iter().map(|b| b.cols).sum::<usize>());
        let mut cols = 0;
        for b in blocks {
            if b.rows != rows {
                return Err(mismatch(format!("hstack rows {} vs {}", b.rows, rows)));
            }
            data.extend_from_slice(&b.data);
            cols += b.cols;
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            let c = self.col(j);
            for (i, &v) in c.iter().enumerate() {
                t.data[j + i * self.cols] = v;
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.cols != other.rows {
            return Err(mismatch(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let m = self.rows;
        let k = self.cols;
        let mut out = DenseMatrix::zeros(m, other.cols);
        par::for_each_chunk_mut(&mut out.data, m, m * k, |j, dst| {
            let coefs = other.col(j);
            let cols: Vec<&[f64]> = (0..k).map(|l| self.col(l)).collect();
            accumulate_columns(dst, &cols, coefs, 1.0);
        });
        Ok(out)
    }

    /// `selfᵀ · other` without forming the transpose.
    pub fn t_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.rows != other.rows {
            return Err(mismatch(format!(
                "t_matmul {}x{}ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let k = self.cols;
        let mut out = DenseMatrix::zeros(k, other.cols);
        par::for_each_chunk_mut(&mut out.data, k, k * self.rows, |j, dst| {
            let b = other.col(j);
            for (i, d) in dst.iter_mut().enumerate() {
                *d = dot(self.col(i), b);
            }
        });
        Ok(out)
    }

    /// `selfᵀ · self`, exactly symmetric.
    pub fn gram(&self) -> DenseMatrix {
        let k = self.cols;
        let mut out = DenseMatrix::zeros(k, k);
        par::for_each_chunk_mut(&mut out.data, k, k * self.rows / 2 + 1, |j, dst| {
            let b = self.col(j);
            for (i, d) in dst.iter_mut().enumerate().take(j + 1) {
                *d = dot(self.col(i), b);
            }
        });
        for j in 0..k {
            for i in j + 1..k {
                out.data[i + j * k] = out.data[j + i * k];
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.cols {
            return Err(mismatch(format!("matvec {}x{} by {}", self.rows, self.cols, v.len())));
        }
        let mut out = vec![0.0; self.rows];
        let cols: Vec<&[f64]> = (0..self.cols).map(|j| self.col(j)).collect();
        accumulate_columns(&mut out, &cols, v, 1.0);
        Ok(out)
    }

    /// `selfᵀ · v`.
    pub fn t_matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.rows {
            return Err(mismatch(format!("t_matvec {}x{}ᵀ by {}", self.rows, self.cols, v.len())));
        }
        Ok((0..self.cols).map(|j| dot(self.col(j), v)).collect())
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(mismatch(format!(
                "elementwise {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// Left-multiplies by `diag(d)` in O(rows·cols).
    pub fn scale_rows(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.rows, "scale_rows length");
        for j in 0..self.cols {
            for (v, &s) in self.col_mut(j).iter_mut().zip(d) {
                *v *= s;
            }
        }
    }

    /// Right-multiplies by `diag(d)` in O(rows·cols).
    pub fn scale_cols(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.cols, "scale_cols length");
        for (j, &s) in d.iter().enumerate() {
            self.col_mut(j).iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add_to_diag(&mut self, s: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += s;
        }
    }

    pub fn add_diag(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.rows.min(self.cols), "add_diag length");
        for (i, &s) in d.iter().enumerate() {
            self[(i, i)] += s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max |aᵢⱼ − aⱼᵢ|` for a square matrix.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.rows;
        let mut worst = 0.0_f64;
        for j in 0..n {
            for i in j + 1..n {
                worst = worst.max((self.data[i + j * n] - self.data[j + i * n]).abs());
            }
        }
        worst
    }

    /// Replaces the matrix by `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        let n = self.rows;
        assert!(self.is_square(), "symmetrize needs a square matrix");
        for j in 0..n {
            for i in j + 1..n {
                let avg = 0.5 * (self.data[i + j * n] + self.data[j + i * n]);
                self.data[i + j * n] = avg;
                self.data[j + i * n] = avg;
            }
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

/// Lower-triangular Cholesky factor with strictly positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct CholFactor {
    lower: DenseMatrix,
}

impl AsRef<DenseMatrix> for CholFactor {
    fn as_ref(&self) -> &DenseMatrix {
        &self.lower
    }
}

impl AsRef<DenseMatrix> for DenseMatrix {
    fn as_ref(&self) -> &DenseMatrix {
        self
    }
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    pub fn into_inner(self) -> DenseMatrix {
        self.lower
    }

    /// `log|A| = 2 Σ log lᵢᵢ`.
    pub fn log_det(&self) -> f64 {
        log_det_from_chol(self)
    }

    /// Solves `L X = B`.
    pub fn solve_lower(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let mut out = rhs.clone();
        self.solve_lower_in_place(&mut out)?;
        Ok(out)
    }

    /// Solves `Lᵀ X = B`.
    pub fn solve_upper(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let mut out = rhs.clone();
        self.solve_upper_in_place(&mut out)?;
        Ok(out)
    }

    /// Solves `A X = B` where `A = L Lᵀ`.
    pub fn solve(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let mut out = rhs.clone();
        self.solve_lower_in_place(&mut out)?;
        self.solve_upper_in_place(&mut out)?;
        Ok(out)
    }

    pub fn solve_lower_in_place(&self, rhs: &mut DenseMatrix) -> Result<(), LinalgError> {
        check_rhs(&self.lower, rhs.rows)?;
        solve_columns(&self.lower, rhs, Side::Lower);
        Ok(())
    }

    pub fn solve_upper_in_place(&self, rhs: &mut DenseMatrix) -> Result<(), LinalgError> {
        check_rhs(&self.lower, rhs.rows)?;
        solve_columns(&self.lower, rhs, Side::Upper);
        Ok(())
    }

    pub fn solve_lower_vec(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_rhs(&self.lower, b.len())?;
        let mut x = b.to_vec();
        forward_subst(&self.lower, &mut x);
        Ok(x)
    }

    pub fn solve_upper_vec(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_rhs(&self.lower, b.len())?;
        let mut x = b.to_vec();
        back_subst_transposed(&self.lower, &mut x);
        Ok(x)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_rhs(&self.lower, b.len())?;
        let mut x = b.to_vec();
        forward_subst(&self.lower, &mut x);
        back_subst_transposed(&self.lower, &mut x);
        Ok(x)
    }

    /// `L · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_rhs(&self.lower, v.len())?;
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (k, &vk) in v.iter().enumerate() {
            if vk != 0.0 {
                axpy(vk, &self.lower.col(k)[k..], &mut out[k..]);
            }
        }
        Ok(out)
    }

    /// `Lᵀ · v`.
    pub fn t_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_rhs(&self.lower, v.len())?;
        Ok((0..self.dim())
            .map(|k| dot(&self.lower.col(k)[k..], &v[k..]))
            .collect())
    }
}

fn check_rhs(l: &DenseMatrix, rows: usize) -> Result<(), LinalgError> {
    if l.rows != rows {
        return Err(mismatch(format!(
            "triangular system of order {} with {} right-hand-side rows",
            l.rows, rows
        )));
    }
    Ok(())
}

/// Which triangular system [`trsolve`] solves with the lower factor `l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `l · x = b`
    Lower,
    /// `lᵀ · x = b`
    Upper,
}

/// Cholesky factorization of a symmetric positive-definite matrix.
pub fn chol(a: &DenseMatrix) -> Result<CholFactor, LinalgError> {
    chol_in_place(a.clone())
}

/// Cholesky factorization reusing the storage of `a`.
///
/// Only the lower triangle is read for the factorization; the full matrix is
/// checked for symmetry first.
pub fn chol_in_place(mut a: DenseMatrix) -> Result<CholFactor, LinalgError> {
    if !a.is_square() {
        return Err(mismatch(format!("chol of a {}x{} matrix", a.rows, a.cols)));
    }
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOLERANCE * a.max_abs() {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    factor_lower(&mut a.data, a.rows)?;
    let n = a.rows;
    for j in 1..n {
        a.data[j * n..j * n + j].iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(CholFactor { lower: a })
}

/// Blocked right-looking factorization of the lower triangle of `a` (n×n, column-major).
fn factor_lower(a: &mut [f64], n: usize) -> Result<(), LinalgError> {
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + CHOL_BLOCK).min(n);
        for j in k0..k1 {
            let (left, right) = a.split_at_mut(j * n);
            let col_j = &mut right[j..n];
            let cols: Vec<&[f64]> = (k0..j).map(|m| &left[m * n + j..m * n + n]).collect();
            let coefs: Vec<f64> = (k0..j).map(|m| left[m * n + j]).collect();
            accumulate_columns(col_j, &cols, &coefs, -1.0);
            let pivot = col_j[0];
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { pivot: j, value: pivot });
            }
            let d = pivot.sqrt();
            col_j[0] = d;
            let inv = 1.0 / d;
            col_j[1..].iter_mut().for_each(|v| *v *= inv);
        }
        if k1 < n {
            let (left, right) = a.split_at_mut(k1 * n);
            let left: &[f64] = left;
            let kb = k1 - k0;
            par::for_each_chunk_mut(right, n, kb * n / 2 + 1, |ci, col| {
                let c = k1 + ci;
                let cols: Vec<&[f64]> = (k0..k1).map(|m| &left[m * n + c..m * n + n]).collect();
                let coefs: Vec<f64> = (k0..k1).map(|m| left[m * n + c]).collect();
                accumulate_columns(&mut col[c..], &cols, &coefs, -1.0);
            });
        }
        k0 = k1;
    }
    Ok(())
}

/// Triangular solve with a lower-triangular `l` (only its lower triangle is read).
pub fn trsolve<L: AsRef<DenseMatrix>>(l: L, rhs: &DenseMatrix, side: Side) -> Result<DenseMatrix, LinalgError> {
    let l = l.as_ref();
    if !l.is_square() {
        return Err(mismatch(format!("trsolve with a {}x{} factor", l.rows, l.cols)));
    }
    check_rhs(l, rhs.rows)?;
    if let Some(index) = (0..l.rows).find(|&i| l[(i, i)] == 0.0) {
        return Err(LinalgError::SingularTriangular { index });
    }
    let mut out = rhs.clone();
    solve_columns(l, &mut out, side);
    Ok(out)
}

fn solve_columns(l: &DenseMatrix, rhs: &mut DenseMatrix, side: Side) {
    let n = l.rows;
    par::for_each_chunk_mut(&mut rhs.data, n, n * n, |_, x| match side {
        Side::Lower => forward_subst(l, x),
        Side::Upper => back_subst_transposed(l, x),
    });
}

fn forward_subst(l: &DenseMatrix, x: &mut [f64]) {
    let n = l.rows;
    for k in 0..n {
        let col = l.col(k);
        let xk = x[k] / col[k];
        x[k] = xk;
        if xk != 0.0 {
            axpy(-xk, &col[k + 1..], &mut x[k + 1..]);
        }
    }
}

fn back_subst_transposed(l: &DenseMatrix, x: &mut [f64]) {
    let n = l.rows;
    for k in (0..n).rev() {
        let col = l.col(k);
        let s = dot(&col[k + 1..], &x[k + 1..]);
        x[k] = (x[k] - s) / col[k];
    }
}

/// `2 Σ log lᵢᵢ`.
pub fn log_det_from_chol(l: &CholFactor) -> f64 {
    2.0 * (0..l.dim()).map(|i| l.lower[(i, i)].ln()).sum::<f64>()
}

/// `mean + L z` for a caller-supplied standard-normal vector `z`.
pub fn mvn_transport(mean: &[f64], chol_cov: &CholFactor, z: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if mean.len() != chol_cov.dim() {
        return Err(mismatch(format!(
            "mean of length {} with covariance of order {}",
            mean.len(),
            chol_cov.dim()
        )));
    }
    let mut out = chol_cov.mul_vec(z)?;
    out.iter_mut().zip(mean).for_each(|(o, m)| *o += m);
    Ok(out)
}

/// Draws from `N(mean, L Lᵀ)`.
pub fn mvn_draw(mean: &[f64], chol_cov: &CholFactor, rng: &mut RandomStream) -> Result<Vec<f64>, LinalgError> {
    if mean.len() != chol_cov.dim() {
        return Err(mismatch(format!(
            "mean of length {} with covariance of order {}",
            mean.len(),
            chol_cov.dim()
        )));
    }
    let z = rng.standard_normals(mean.len());
    mvn_transport(mean, chol_cov, &z)
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    let len = x.len().min(y.len());
    let (x, y) = (&x[..len], &mut y[..len]);
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    let len = x.len().min(y.len());
    let (x, y) = (&x[..len], &y[..len]);
    let mut acc = [0.0; 4];
    let chunks = len / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += x[i] * y[i];
        acc[1] += x[i + 1] * y[i + 1];
        acc[2] += x[i + 2] * y[i + 2];
        acc[3] += x[i + 3] * y[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..len {
        s += x[i] * y[i];
    }
    s
}

/// `dst += sign · Σₘ coefs[m] · cols[m]`, four columns per sweep over `dst`.
#[inline]
fn accumulate_columns(dst: &mut [f64], cols: &[&[f64]], coefs: &[f64], sign: f64) {
    let len = dst.len();
    let mut m = 0;
    while m + 4 <= cols.len() {
        let (a0, a1, a2, a3) = (
            sign * coefs[m],
            sign * coefs[m + 1],
            sign * coefs[m + 2],
            sign * coefs[m + 3],
        );
        let c0 = &cols[m][..len];
        let c1 = &cols[m + 1][..len];
        let c2 = &cols[m + 2][..len];
        let c3 = &cols[m + 3][..len];
        for i in 0..len {
            dst[i] += a0 * c0[i] + a1 * c1[i] + a2 * c2[i] + a3 * c3[i];
        }
        m += 4;
    }
    while m < cols.len() {
        let a = sign * coefs[m];
        if a != 0.0 {
            axpy(a, &cols[m][..len], dst);
        }
        m += 1;
    }
}
