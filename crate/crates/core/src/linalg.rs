//! Small sparse and dense matrix kernels used by the spectral and moment
//! code. Sizes are desk scale (a few hundred rows), so dense LU is fine.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major sparse matrix: `rows[x]` lists `(y, a_xy)` with `a_xy != 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn from_rows(rows: Vec<Vec<(usize, T)>>) -> Self {
        let n = rows.len();
        debug_assert!(rows.iter().flatten().all(|&(j, _)| j < n));
        Self { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, x: usize) -> &[(usize, T)] {
        &self.rows[x]
    }

    pub fn rows(&self) -> &[Vec<(usize, T)>] {
        &self.rows
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.rows[x]
            .iter()
            .find(|&&(j, _)| j == y)
            .map_or(T::zero(), |&(_, w)| w)
    }

    pub fn row_sum(&self, x: usize) -> T {
        self.rows[x].iter().map(|&(_, w)| w).sum()
    }

    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        for row in &self.rows {
            for &(j, w) in row {
                out[j] += w;
            }
        }
        out
    }

    /// `‖A‖ = sup_x Σ_y |a_xy|`.
    pub fn norm_inf(&self) -> T {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(_, w)| w.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.dim()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                rows[j].push((i, w));
            }
        }
        Self { rows }
    }

    /// `out = A v`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, w)| w * v[j]).sum())
            .collect()
    }

    /// `out = vᵀ A`, i.e. `out(y) = Σ_x v(x) a_xy`.
    pub fn vec_mul(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        for (x, row) in self.rows.iter().enumerate() {
            let vx = v[x];
            if vx == T::zero() {
                continue;
            }
            for &(y, w) in row {
                out[y] += vx * w;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = self.dim();
        let mut d = DenseMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                d[(i, j)] += w;
            }
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    nrows: usize,
    ncols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![T::zero(); nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                self.data[i * self.ncols..(i + 1) * self.ncols]
                    .iter()
                    .zip(v)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn norm_one(&self) -> T {
        (0..self.ncols)
            .map(|j| (0..self.nrows).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<Lu<T>> {
        assert_eq!(self.nrows, self.ncols, "LU of a non-square matrix");
        let n = self.nrows;
        let mut a = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, T::zero()), |acc, c| if c.1 > acc.1 { c } else { acc });
            if pivot == T::zero() {
                return Err(Error::IllConditioned(f64::INFINITY));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let akk = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / akk;
                a[i * n + k] = l;
                if l != T::zero() {
                    for j in k + 1..n {
                        let akj = a[k * n + j];
                        a[i * n + j] -= l * akj;
                    }
                }
            }
        }
        Ok(Lu { n, a, perm })
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.ncols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.ncols + j]
    }
}

#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    a: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.a[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.a[i * n + j] * x[j];
            }
            x[i] = s / self.a[i * n + i];
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix<T> {
        let n = self.n;
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// 1-norm condition number `‖A‖₁ ‖A⁻¹‖₁`, computed through the explicit
/// inverse.
pub fn condition_number<T: Scalar>(a: &DenseMatrix<T>, lu: &Lu<T>) -> T {
    a.norm_one() * lu.inverse().norm_one()
}

pub fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs())
        .fold(T::zero(), T::max)
}
