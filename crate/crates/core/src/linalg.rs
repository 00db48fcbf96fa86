//! Small dense linear algebra for desk-scale problems (dimensions up to a few hundred).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

pub fn dist_sq<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<T: Scalar>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&x| x * s).collect()
}

/// `y += s * x`
pub fn axpy<T: Scalar>(s: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn mean<T: Scalar>(points: &[Vec<T>]) -> Vec<T> {
    let d = points.first().map_or(0, Vec::len);
    let mut out = vec![T::zero(); d];
    for p in points {
        axpy(T::one(), p, &mut out);
    }
    let n = T::from_usize_lossy(points.len().max(1));
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Dense row-major matrix. Serialized as an array of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    into = "Vec<Vec<T>>",
    try_from = "Vec<Vec<T>>",
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
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

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    got: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data,
        })
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

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self' x`
    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, self.row(i), &mut out);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `self' self`
    pub fn gram(&self) -> Self {
        self.transpose().mul(self)
    }

    pub fn max_abs_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows)
            .map(|i| self.row(i).iter().fold(T::zero(), |a, &b| a + b))
            .collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            axpy(T::one(), self.row(i), &mut out);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> From<Matrix<T>> for Vec<Vec<T>> {
    fn from(m: Matrix<T>) -> Self {
        m.to_rows()
    }
}

impl<T: Scalar> TryFrom<Vec<Vec<T>>> for Matrix<T> {
    type Error = Error;
    fn try_from(rows: Vec<Vec<T>>) -> Result<Self> {
        Matrix::from_rows(rows)
    }
}

/// Least-squares solution of `[c_1 ... c_k] s ≈ rhs` by Householder QR.
/// Returns `None` when the columns are numerically dependent.
pub fn least_squares<T: Scalar>(columns: &[Vec<T>], rhs: &[T]) -> Option<Vec<T>> {
    let n = rhs.len();
    let k = columns.len();
    if k > n || columns.iter().any(|c| c.len() != n) {
        return None;
    }
    let mut a: Vec<Vec<T>> = columns.to_vec();
    let mut b = rhs.to_vec();
    let scale = columns.iter().map(|c| norm(c)).fold(T::zero(), T::max);
    let tiny = scale * T::epsilon() * T::lit(64.0) * T::from_usize_lossy(n.max(1));
    for j in 0..k {
        let alpha = norm(&a[j][j..]);
        if !(alpha > tiny) {
            return None;
        }
        let alpha = if a[j][j] > T::zero() { -alpha } else { alpha };
        let mut v: Vec<T> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vv = norm_sq(&v);
        if vv > T::zero() {
            let reflect = |col: &mut [T]| {
                let f = T::lit(2.0) * dot(&v, col) / vv;
                for (c, &vi) in col.iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            };
            for col in a.iter_mut().skip(j) {
                reflect(&mut col[j..]);
            }
            reflect(&mut b[j..]);
        }
    }
    let mut s = vec![T::zero(); k];
    for j in (0..k).rev() {
        let mut acc = b[j];
        for l in (j + 1)..k {
            acc -= a[l][j] * s[l];
        }
        s[j] = acc / a[j][j];
    }
    Some(s)
}

/// Lower-triangular `L` with `L L' = S` for symmetric positive definite `S`;
/// `None` when a pivot is not positive.
pub fn cholesky<T: Scalar>(s: &Matrix<T>) -> Option<Matrix<T>> {
    let n = s.rows();
    if !s.is_square() {
        return None;
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    Some(l)
}

/// `x` with `L x = b`, `L` lower triangular.
pub fn solve_lower<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= l[(i, k)] * x[k];
        }
        x[i] = acc / l[(i, i)];
    }
    x
}

/// `x` with `L' x = b`, `L` lower triangular.
pub fn solve_lower_transposed<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for k in (i + 1)..n {
            acc -= l[(k, i)] * x[k];
        }
        x[i] = acc / l[(i, i)];
    }
    x
}

pub const POWER_ITERATION_CAP: usize = 100_000;

/// Fixed, non-degenerate start vector (additive recurrence, centered).
pub fn start_vector<T: Scalar>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            T::lit((0.569_840_290_998_053_2 + i as f64 * 0.754_877_666_246_692_7).fract() - 0.5)
        })
        .collect()
}

/// Dominant eigenvalue of a symmetric positive semidefinite operator by power
/// iteration, stopping when the Rayleigh quotient changes by less than
/// `rel_tol` relative to its value.
pub fn power_iteration<T, F>(apply: F, start: Vec<T>, rel_tol: f64, max_iter: usize) -> Result<T>
where
    T: Scalar,
    F: Fn(&[T]) -> Vec<T>,
{
    let tol = T::lit(rel_tol).max(T::epsilon() * T::lit(4.0));
    let tiny = T::min_positive_value().sqrt();
    let n0 = norm(&start);
    if n0 <= tiny {
        return Err(Error::Degenerate("zero start vector".into()));
    }
    let mut v = scale(&start, T::one() / n0);
    let mut prev: Option<T> = None;
    for _ in 0..max_iter {
        let w = apply(&v);
        let wn = norm(&w);
        if wn <= tiny {
            return Ok(T::zero());
        }
        let rq = dot(&v, &w);
        if let Some(p) = prev {
            if (rq - p).abs() <= tol * rq.abs() {
                return Ok(rq);
            }
        }
        prev = Some(rq);
        v = scale(&w, T::one() / wn);
    }
    Err(Error::NotConverged {
        what: "power iteration",
        iterations: max_iter,
    })
}

/// Largest and smallest eigenvalue of a symmetric PSD matrix; the smallest is
/// obtained from the dominant eigenvalue of the shifted matrix `λ_max I − Q`.
pub fn extreme_eigenvalues<T: Scalar>(q: &Matrix<T>) -> Result<(T, T)> {
    let n = q.rows();
    if n == 0 {
        return Ok((T::zero(), T::zero()));
    }
    let start = start_vector::<T>(n)
        .into_iter()
        .map(|v| v + T::lit(0.75))
        .collect::<Vec<_>>();
    // Q may have a negative part within tolerance; shift to keep the operator PSD.
    let gersh = (0..n)
        .map(|i| q.row(i).iter().fold(T::zero(), |a, &b| a + b.abs()))
        .fold(T::zero(), T::max);
    let shifted_up = |x: &[T]| {
        let mut y = q.mul_vec(x);
        axpy(gersh, x, &mut y);
        y
    };
    let top = power_iteration(shifted_up, start.clone(), 1e-13, POWER_ITERATION_CAP)? - gersh;
    let flipped = |x: &[T]| {
        let qx = q.mul_vec(x);
        x.iter()
            .zip(qx)
            .map(|(&xi, qi)| top * xi - qi)
            .collect::<Vec<_>>()
    };
    let spread = power_iteration(flipped, start, 1e-13, POWER_ITERATION_CAP)?;
    Ok((top, top - spread))
}
