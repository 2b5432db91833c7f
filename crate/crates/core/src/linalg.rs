//! Small dense square matrices: products, polynomial evaluation and LU solves.

use std::ops::{Index, IndexMut};

use crate::error::AoiError;
use crate::scalar::Real;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(n: usize) -> Self {
        Mat { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds from nested rows; every row must have the outer length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, AoiError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(AoiError::InvalidParameter(format!(
                    "matrix row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == T::zero() {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, v: &[T]) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); n];
        for (k, &a) in v.iter().enumerate() {
            if a == T::zero() {
                continue;
            }
            for (o, &b) in out.iter_mut().zip(self.row(k)) {
                *o += a * b;
            }
        }
        out
    }

    /// Matrix times column vector.
    pub fn right_mul(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n).map(|i| self.row(i).iter().copied().sum()).collect()
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: T, other: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn add_diag(&mut self, s: T) {
        for i in 0..self.n {
            self[(i, i)] += s;
        }
    }

    /// `self += u v^T`, scaled by `s`.
    pub fn add_outer(&mut self, s: T, u: &[T], v: &[T]) {
        let n = self.n;
        for i in 0..n {
            let su = s * u[i];
            if su == T::zero() {
                continue;
            }
            for (a, &b) in self.data[i * n..(i + 1) * n].iter_mut().zip(v) {
                *a += su * b;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.n)
            .map(|i| self.row(i).iter().fold(T::zero(), |s, &a| s + a.abs()))
            .fold(T::zero(), T::max)
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn min_entry(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// `sum_k coeffs[k] X^k` by Paterson-Stockmeyer: about `2 sqrt(len)` products.
pub fn matrix_poly<T: Real>(coeffs: &[T], x: &Mat<T>) -> Mat<T> {
    let n = x.dim();
    let len = coeffs.len();
    if len == 0 {
        return Mat::zeros(n);
    }
    let s = ((len as f64).sqrt().ceil() as usize).max(1);
    let mut pows = Vec::with_capacity(s + 1);
    pows.push(Mat::identity(n));
    for i in 1..=s {
        let next = pows[i - 1].matmul(x);
        pows.push(next);
    }
    let blocks = len.div_ceil(s);
    let mut acc = Mat::zeros(n);
    for blk in (0..blocks).rev() {
        if blk + 1 < blocks {
            acc = acc.matmul(&pows[s]);
        }
        for i in 0..s {
            let k = blk * s + i;
            if k < len && coeffs[k] != T::zero() {
                acc.add_scaled(coeffs[k], &pows[i]);
            }
        }
    }
    acc
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Mat<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn new(a: &Mat<T>) -> Result<Self, AoiError> {
        let n = a.dim();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.norm_inf().max(T::min_positive_value());
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= T::epsilon() * scale * T::c(1e-3) {
                return Err(AoiError::Singular("LU factorization"));
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.dim();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    /// Solves `x A = b` for a row vector `x`.
    pub fn solve_left(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.dim();
        // A = P^T L U, so x P^T L U = b: solve y U = b, z L = y, x = z P.
        let mut y = b.to_vec();
        for j in 0..n {
            let mut s = y[j];
            for i in 0..j {
                s -= y[i] * self.lu[(i, j)];
            }
            y[j] = s / self.lu[(j, j)];
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for i in j + 1..n {
                s -= y[i] * self.lu[(i, j)];
            }
            y[j] = s;
        }
        let mut x = vec![T::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}
