//! Column-major dense matrices and the handful of factorizations the
//! reduction pipeline needs (LU with partial pivoting, Householder least squares).

use std::ops::{Index, IndexMut};

use crate::error::{check_len, Error, Result};
use crate::scalar::{dot, Scalar};

/// Dense matrix stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_len("DenseMatrix::from_col_major", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices; handy for literals in tests.
    pub fn from_rows(rows: &[&[T]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &x) in row.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        m
    }

    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            check_len("DenseMatrix::from_columns", rows, c.len())?;
            data.extend_from_slice(c);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Mutable views of two distinct columns `i < j`.
    pub fn col_pair_mut(&mut self, i: usize, j: usize) -> (&mut [T], &mut [T]) {
        assert!(i < j && j < self.cols);
        let r = self.rows;
        let (lo, hi) = self.data.split_at_mut(j * r);
        (&mut lo[i * r..(i + 1) * r], &mut hi[..r])
    }

    pub fn columns(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.cols).map(move |j| self.col(j))
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn push_column(&mut self, c: &[T]) -> Result<()> {
        if self.cols == 0 && self.rows == 0 {
            self.rows = c.len();
        }
        check_len("DenseMatrix::push_column", self.rows, c.len())?;
        self.data.extend_from_slice(c);
        self.cols += 1;
        Ok(())
    }

    /// Appends every column of `other` in place.
    pub fn extend_columns(&mut self, other: &Self) -> Result<()> {
        if self.cols == 0 && self.rows == 0 {
            self.rows = other.rows;
        }
        check_len("DenseMatrix::extend_columns", self.rows, other.rows)?;
        self.data.extend_from_slice(&other.data);
        self.cols += other.cols;
        Ok(())
    }

    /// Columns `range` as a new matrix.
    pub fn column_block(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.cols);
        Self {
            rows: self.rows,
            cols: end - start,
            data: self.data[start * self.rows..end * self.rows].to_vec(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        Self {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), self.cols, |i, j| self[(idx[i], j)])
    }

    /// `[self other]`
    pub fn hcat(&self, other: &Self) -> Result<Self> {
        check_len("DenseMatrix::hcat", self.rows, other.rows)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        })
    }

    /// `[self; other]`
    pub fn vcat(&self, other: &Self) -> Result<Self> {
        check_len("DenseMatrix::vcat", self.cols, other.cols)?;
        let rows = self.rows + other.rows;
        Ok(Self::from_fn(rows, self.cols, |i, j| {
            if i < self.rows {
                self[(i, j)]
            } else {
                other[(i - self.rows, j)]
            }
        }))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        check_len("DenseMatrix elementwise (rows)", self.rows, other.rows)?;
        check_len("DenseMatrix elementwise (cols)", self.cols, other.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self * other`
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_len("DenseMatrix::matmul", self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.col(j);
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (l, &b) in oc.iter().enumerate() {
                if b == T::zero() {
                    continue;
                }
                for (d, &a) in dst.iter_mut().zip(self.col(l)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * other`, without forming the transpose.
    pub fn tr_matmul(&self, other: &Self) -> Result<Self> {
        check_len("DenseMatrix::tr_matmul", self.rows, other.rows)?;
        Ok(Self::from_fn(self.cols, other.cols, |i, j| {
            dot(self.col(i), other.col(j))
        }))
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        check_len("DenseMatrix::matvec", self.cols, x.len())?;
        let mut y = vec![T::zero(); self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == T::zero() {
                continue;
            }
            for (yi, &a) in y.iter_mut().zip(self.col(j)) {
                *yi += a * xj;
            }
        }
        Ok(y)
    }

    /// `self^T x`
    pub fn tr_matvec(&self, x: &[T]) -> Result<Vec<T>> {
        check_len("DenseMatrix::tr_matvec", self.rows, x.len())?;
        Ok(self.columns().map(|c| dot(c, x)).collect())
    }

    pub fn frobenius_norm(&self) -> T {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `‖A^T A − I‖_F`
    pub fn orthonormality_residual(&self) -> T {
        let g = self.tr_matmul(self).expect("square Gram matrix");
        let mut s = T::zero();
        for j in 0..g.cols {
            for i in 0..g.rows {
                let d = if i == j { g[(i, j)] - T::one() } else { g[(i, j)] };
                s += d * d;
            }
        }
        s.sqrt()
    }

    /// Solves `self x = b` by LU with partial pivoting.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        Lu::factor(self)?.solve(b)
    }

    pub fn inverse(&self) -> Result<Self> {
        let lu = Lu::factor(self)?;
        let n = self.rows;
        let mut cols = Vec::with_capacity(n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            cols.push(lu.solve(&e)?);
        }
        Self::from_columns(n, &cols)
    }

    /// Least-squares solution of `self x ≈ b` for a tall full-column-rank matrix,
    /// via Householder QR.
    pub fn least_squares(&self, b: &[T]) -> Result<Vec<T>> {
        check_len("DenseMatrix::least_squares", self.rows, b.len())?;
        if self.rows < self.cols {
            return Err(Error::InvalidArgument(format!(
                "least squares needs rows >= cols, got {}x{}",
                self.rows, self.cols
            )));
        }
        let mut a = self.clone();
        let mut rhs = b.to_vec();
        let (m, n) = (self.rows, self.cols);
        let scale = self.max_abs().max(T::min_positive_value());
        for k in 0..n {
            let col = &a.data[k * m + k..(k + 1) * m];
            let norm = dot(col, col).sqrt();
            if norm <= T::epsilon() * scale {
                return Err(Error::SingularMatrix {
                    column: k,
                    pivot: norm.to_f64_lossy(),
                });
            }
            let alpha = if col[0] > T::zero() { -norm } else { norm };
            let mut v: Vec<T> = col.to_vec();
            v[0] -= alpha;
            let vnorm2 = dot(&v, &v);
            if vnorm2 > T::zero() {
                for j in k..n {
                    let cj = &mut a.data[j * m + k..(j + 1) * m];
                    let f = (T::one() + T::one()) * dot(&v, cj) / vnorm2;
                    for (c, &vi) in cj.iter_mut().zip(&v) {
                        *c -= f * vi;
                    }
                }
                let f = (T::one() + T::one()) * dot(&v, &rhs[k..]) / vnorm2;
                for (r, &vi) in rhs[k..].iter_mut().zip(&v) {
                    *r -= f * vi;
                }
            }
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for j in i + 1..n {
                s -= a[(i, j)] * x[j];
            }
            x[i] = s / a[(i, i)];
        }
        Ok(x)
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self> {
        check_len("Lu::factor (square)", a.rows, a.cols)?;
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, T::zero()), |best, c| if c.1 > best.1 { c } else { best });
            if pv <= T::epsilon() * scale || pv == T::zero() {
                return Err(Error::SingularMatrix {
                    column: k,
                    pivot: pv.to_f64_lossy(),
                });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let t = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = t;
                }
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                lu[(i, k)] /= d;
            }
            for j in k + 1..n {
                let f = lu[(k, j)];
                if f == T::zero() {
                    continue;
                }
                for i in k + 1..n {
                    let l = lu[(i, k)];
                    lu[(i, j)] -= l * f;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.lu.rows;
        check_len("Lu::solve", n, b.len())?;
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
        Ok(x)
    }
}
