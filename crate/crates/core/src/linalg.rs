//! Dense row-major matrices and the elimination kernels the cone code needs.

use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix data has {got} entries, expected {rows}x{cols}")]
    BadLength { rows: usize, cols: usize, got: usize },
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("ragged rows: row {row} has {got} entries, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Dense matrix with entries stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for DenseMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[i * self.cols..(i + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != rows * cols {
            return Err(LinalgError::BadLength { rows, cols, got: data.len() });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite_value()) {
            return Err(LinalgError::NonFinite { row: pos / cols, col: pos % cols });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let expected = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * expected);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != expected {
                return Err(LinalgError::Ragged { row: i, got: r.len(), expected });
            }
            data.extend(r.iter().cloned());
        }
        Self::new(rows.len(), expected, data)
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<T>]) -> Result<Self, LinalgError> {
        Ok(Self::from_rows(cols)?.transpose())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn row_vecs(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column_vecs(&self) -> Vec<Vec<T>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j).clone());
            }
        }
        Self { rows: self.cols, cols: self.rows, data }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let idx = i * other.cols + j;
                    out.data[idx] = out.data[idx].clone() + a.clone() * other.get(k, j).clone();
                }
            }
        }
        Ok(out)
    }

    /// `self * v`; panics if `v.len() != cols`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "vector length must match column count");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ * v`; panics if `v.len() != rows`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows, "vector length must match row count");
        let mut out = vec![T::zero(); self.cols];
        for (i, vi) in v.iter().enumerate() {
            if vi.is_zero() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o = o.clone() + a.clone() * vi.clone();
            }
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend(self.row(i).iter().cloned());
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    pub fn select_cols(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for i in 0..self.rows {
            for &j in idx {
                data.push(self.get(i, j).clone());
            }
        }
        Self { rows: self.rows, cols: idx.len(), data }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> DenseMatrix<U> {
        DenseMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn max_abs(&self) -> T {
        max_abs(&self.data)
    }

    /// Numerical rank by complete-pivoting elimination. A pivot counts when
    /// it exceeds `tol * max|a_ij| * max(rows, cols)`; exact types use `tol = 0`.
    pub fn rank(&self, tol: &T) -> usize {
        rank_of_rows(&self.row_vecs(), self.cols, tol)
    }

    /// Basis of `{x : self * x = 0}` returned as the columns of a
    /// `cols x k` matrix, or `None` when the nullspace is trivial.
    pub fn nullspace(&self, tol: &T) -> Option<Self> {
        let basis = nullspace_vectors(&self.row_vecs(), self.cols, tol);
        if basis.is_empty() {
            None
        } else {
            Some(Self::from_columns(&basis).expect("nonempty basis"))
        }
    }

    /// Solves a square system by partial-pivoting elimination.
    pub fn solve(&self, rhs: &[T], tol: &T) -> Option<Vec<T>> {
        if self.rows != self.cols || rhs.len() != self.rows {
            return None;
        }
        let n = self.rows;
        let mut a = self.row_vecs();
        let mut b = rhs.to_vec();
        let thresh = pivot_threshold(&self.max_abs(), n, tol);
        for k in 0..n {
            let p = (k..n).max_by(|&x, &y| {
                a[x][k].abs().partial_cmp(&a[y][k].abs()).unwrap_or(std::cmp::Ordering::Equal)
            })?;
            if a[p][k].abs() <= thresh {
                return None;
            }
            a.swap(k, p);
            b.swap(k, p);
            for i in (k + 1)..n {
                if a[i][k].is_zero() {
                    continue;
                }
                let factor = a[i][k].clone() / a[k][k].clone();
                for j in k..n {
                    let v = a[k][j].clone();
                    a[i][j] = a[i][j].clone() - factor.clone() * v;
                }
                let bk = b[k].clone();
                b[i] = b[i].clone() - factor * bk;
            }
        }
        let mut x = vec![T::zero(); n];
        for k in (0..n).rev() {
            let mut s = b[k].clone();
            for j in (k + 1)..n {
                s = s - a[k][j].clone() * x[j].clone();
            }
            x[k] = s / a[k][k].clone();
        }
        Some(x)
    }

    pub fn inverse(&self, tol: &T) -> Option<Self> {
        let n = self.rows;
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            cols.push(self.solve(&e, tol)?);
        }
        Self::from_columns(&cols).ok()
    }
}

impl DenseMatrix<f64> {
    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

pub fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| {
        let a = x.abs();
        if a > acc {
            a
        } else {
            acc
        }
    })
}

fn pivot_threshold<T: Scalar>(scale: &T, dim: usize, tol: &T) -> T {
    if tol.is_zero() {
        T::zero()
    } else {
        tol.clone() * scale.clone() * T::from_usize(dim.max(1)).expect("usize fits")
    }
}

/// Rank of a list of row vectors of length `cols`.
pub fn rank_of_rows<T: Scalar>(rows: &[Vec<T>], cols: usize, tol: &T) -> usize {
    if rows.is_empty() || cols == 0 {
        return 0;
    }
    let mut a: Vec<Vec<T>> = rows.to_vec();
    let scale = a.iter().map(|r| max_abs(r)).fold(T::zero(), |acc, x| if x > acc { x } else { acc });
    if scale.is_zero() {
        return 0;
    }
    let thresh = pivot_threshold(&scale, rows.len().max(cols), tol);
    let m = a.len();
    let mut col_perm: Vec<usize> = (0..cols).collect();
    let mut rank = 0;
    for k in 0..m.min(cols) {
        // complete pivoting over the trailing block
        let mut best = T::zero();
        let mut bi = k;
        let mut bj = k;
        for (i, row) in a.iter().enumerate().skip(k) {
            for (jj, &j) in col_perm.iter().enumerate().skip(k) {
                let v = row[j].abs();
                if v > best {
                    best = v;
                    bi = i;
                    bj = jj;
                }
            }
        }
        if best <= thresh {
            break;
        }
        a.swap(k, bi);
        col_perm.swap(k, bj);
        let pc = col_perm[k];
        let pivot = a[k][pc].clone();
        let (top, bottom) = a.split_at_mut(k + 1);
        let prow = &top[k];
        for row in bottom.iter_mut() {
            if row[pc].is_zero() {
                continue;
            }
            let factor = row[pc].clone() / pivot.clone();
            for &j in &col_perm[k..] {
                row[j] = row[j].clone() - factor.clone() * prow[j].clone();
            }
        }
        rank += 1;
    }
    rank
}

/// Nullspace basis of the matrix with the given rows, via reduced row echelon form.
pub fn nullspace_vectors<T: Scalar>(rows: &[Vec<T>], cols: usize, tol: &T) -> Vec<Vec<T>> {
    let mut a: Vec<Vec<T>> = rows.to_vec();
    let m = a.len();
    let scale = a.iter().map(|r| max_abs(r)).fold(T::zero(), |acc, x| if x > acc { x } else { acc });
    let thresh = pivot_threshold(&scale, m.max(cols), tol);
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == m {
            break;
        }
        let mut best = T::zero();
        let mut bi = r;
        for (i, row) in a.iter().enumerate().skip(r) {
            let v = row[c].abs();
            if v > best {
                best = v;
                bi = i;
            }
        }
        if best <= thresh || best.is_zero() {
            for row in a.iter_mut().skip(r) {
                row[c] = T::zero();
            }
            continue;
        }
        a.swap(r, bi);
        let pivot = a[r][c].clone();
        for j in 0..cols {
            a[r][j] = a[r][j].clone() / pivot.clone();
        }
        let prow = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let factor = row[c].clone();
            for j in 0..cols {
                row[j] = row[j].clone() - factor.clone() * prow[j].clone();
            }
        }
        pivots.push(c);
        r += 1;
    }
    let mut basis = Vec::new();
    for free in (0..cols).filter(|c| !pivots.contains(c)) {
        let mut v = vec![T::zero(); cols];
        v[free] = T::one();
        for (pr, &pc) in pivots.iter().enumerate() {
            v[pc] = -a[pr][free].clone();
        }
        basis.push(v);
    }
    basis
}
