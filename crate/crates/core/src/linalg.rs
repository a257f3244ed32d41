//! Small dense row-major matrices.
//!
//! Dimensions here are at most a few hundred, so everything is plain loops.

use std::ops::{Index, IndexMut};

use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::{Field, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Field> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = T::one();
        }
        out
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::LengthMismatch {
                    expected: c,
                    found: row.len(),
                });
            }
            data.extend(row.iter().cloned());
        }
        Ok(Self {
            rows: n,
            cols: c,
            data,
        })
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut out = Self::zeros(diag.len(), diag.len());
        for (i, v) in diag.iter().enumerate() {
            out[(i, i)] = v.clone();
        }
        out
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)].clone())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].clone();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let prod = a.clone() * other[(k, j)].clone();
                    out[(i, j)] = out[(i, j)].clone() + prod;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if self.cols != v.len() {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: &T) -> Self {
        self.map(|x| x * s.clone())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().cloned().map(f).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::LengthMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        let data = self
            .data
            .iter()
            .cloned()
            .zip(other.data.iter().cloned())
            .map(|(a, b)| f(a, b))
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Exact symmetry check (entries compared with `==`).
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    pub fn convert<U: Field>(&self) -> Option<Matrix<U>> {
        let data = self
            .data
            .iter()
            .map(|x| x.to_f64().and_then(U::from_f64))
            .collect::<Option<Vec<U>>>()?;
        Some(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

impl<T: Real> Matrix<T> {
    pub fn is_symmetric_tol(&self, tol: T) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| {
                (0..i).all(|j| {
                    let (a, b) = (self[(i, j)], self[(j, i)]);
                    (a - b).abs() <= tol * (T::one() + a.abs().max(b.abs()))
                })
            })
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Lower Cholesky factor of a symmetric positive definite matrix.
    pub fn cholesky(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::CholeskyFailure("matrix is not square".into()));
        }
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::CholeskyFailure(format!(
                    "non-positive pivot at index {j}"
                )));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Cholesky factor of a positive semidefinite matrix. Pivots below
    /// `tol * max_diag` are treated as zero and their column is left empty.
    pub fn cholesky_semidefinite(&self, tol: T) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::CholeskyFailure("matrix is not square".into()));
        }
        let n = self.rows;
        let scale = (0..n).fold(T::zero(), |m, i| m.max(self[(i, i)].abs()));
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d < -tol * scale.max(T::one()) * T::lit(1e3) {
                return Err(Error::CholeskyFailure(format!(
                    "negative pivot at index {j}"
                )));
            }
            if d <= tol * scale {
                continue;
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Returns eigenvalues and the matrix whose columns are eigenvectors.
    pub fn symmetric_eigen(&self) -> Result<(Vec<T>, Self)> {
        if !self.is_square() {
            return Err(Error::LengthMismatch {
                expected: self.rows,
                found: self.cols,
            });
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut v = Self::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..100 {
            let mut off = T::zero();
            let mut total = T::zero();
            for i in 0..n {
                for j in 0..n {
                    let x = a[(i, j)] * a[(i, j)];
                    total += x;
                    if i != j {
                        off += x;
                    }
                }
            }
            if off <= eps * eps * total || off == T::zero() {
                let vals = (0..n).map(|i| a[(i, i)]).collect();
                return Ok((vals, v));
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        Err(Error::NumericalFailure(
            "Jacobi eigenvalue iteration did not converge".into(),
        ))
    }

    /// Solves `self * x = b` for symmetric positive semidefinite `self`,
    /// returning the minimum-norm least-squares solution.
    pub fn solve_psd(&self, b: &[T]) -> Result<Vec<T>> {
        if let Ok(l) = self.cholesky() {
            let x = l.solve_lower_then_upper(b);
            if x.iter().all(|v| v.is_finite()) {
                let ax = self.matvec(&x)?;
                let bnorm = b.iter().fold(T::zero(), |m, v| m.max(v.abs()));
                let rnorm = ax
                    .iter()
                    .zip(b)
                    .fold(T::zero(), |m, (u, v)| m.max((*u - *v).abs()));
                if rnorm <= T::lit(1e-8).max(T::epsilon().sqrt()) * (T::one() + bnorm) {
                    return Ok(x);
                }
            }
        }
        let (vals, vecs) = self.symmetric_eigen()?;
        let n = self.rows;
        let top = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let cut = top * T::epsilon() * T::lit(1e4) * T::from_usize(n).unwrap();
        let mut x = vec![T::zero(); n];
        for k in 0..n {
            if vals[k] <= cut {
                continue;
            }
            let coef = (0..n).fold(T::zero(), |acc, i| acc + vecs[(i, k)] * b[i]) / vals[k];
            for i in 0..n {
                x[i] += coef * vecs[(i, k)];
            }
        }
        Ok(x)
    }

    /// For a lower-triangular Cholesky factor `L`, solves `L Lᵀ x = b`.
    pub fn solve_lower_then_upper(&self, b: &[T]) -> Vec<T> {
        let n = self.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self[(i, k)] * y[k];
            }
            y[i] = s / self[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self[(k, i)] * y[k];
            }
            y[i] = s / self[(i, i)];
        }
        y
    }

    /// Correlation matrix from a covariance matrix. Fails on a zero or
    /// negative variance.
    pub fn covariance_to_correlation(&self) -> Result<Self> {
        let n = self.rows;
        let sd: Vec<T> = (0..n).map(|i| self[(i, i)]).collect();
        if let Some(j) = sd.iter().position(|v| !(*v > T::zero())) {
            return Err(Error::DegenerateMarginal { index: j });
        }
        let sd: Vec<T> = sd.into_iter().map(Float::sqrt).collect();
        let mut r = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] = if i == j {
                    T::one()
                } else {
                    self[(i, j)] / (sd[i] * sd[j])
                };
            }
        }
        Ok(r)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}
