//! Dense row-major matrices over any ring, with elimination-based
//! determinant, inverse and exponential over scalar fields.

use std::fmt::Debug;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_traits::{One, Zero};

use crate::scalar::Scalar;

/// Minimal algebraic structure needed for matrix products.
pub trait Ring:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
}

impl<T> Ring for T where
    T: Clone
        + Debug
        + PartialEq
        + Zero
        + One
        + Add<Output = T>
        + Sub<Output = T>
        + Mul<Output = T>
        + Neg<Output = T>
{
}

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Ring> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix::from_vec(r, c, rows.into_iter().flatten().collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::from_vec(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    /// Rectangular identity: ones on the main diagonal.
    pub fn eye(rows: usize, cols: usize) -> Self {
        Matrix::from_fn(rows, cols, |i, j| if i == j { T::one() } else { T::zero() })
    }

    /// Matrix unit `E_{ab}` (0-based indices).
    pub fn unit(n: usize, a: usize, b: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        m[(a, b)] = T::one();
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn map<U: Ring>(&self, f: impl Fn(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn scale(&self, s: &T) -> Self {
        self.map(|v| v.clone() * s.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)].is_zero()))
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).fold(T::zero(), |acc, i| acc + self[(i, i)].clone())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out: Matrix<T> = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(k, j)];
                    if b.is_zero() {
                        continue;
                    }
                    let v = out[(i, j)].clone() + a.clone() * b.clone();
                    out[(i, j)] = v;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect()
    }

    /// `bra^T A ket`.
    pub fn bilinear(&self, bra: &[T], ket: &[T]) -> T {
        let av = self.mul_vec(ket);
        bra.iter()
            .zip(&av)
            .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        Matrix::from_fn(rows.len(), cols.len(), |i, j| {
            self[(rows[i], cols[j])].clone()
        })
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Matrix::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)].clone())
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)].clone();
            }
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Matrix::identity(self.rows);
        for _ in 0..e {
            acc = acc.matmul(self);
        }
        acc
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn from_i64(m: &Matrix<i64>) -> Self {
        m.map(|&v| T::from_i64(v))
    }

    pub fn from_f64_rows(rows: &[&[f64]]) -> Self {
        Matrix::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&v| T::from_f64(v)).collect())
                .collect(),
        )
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(Scalar::to_f64)
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(Scalar::magnitude).fold(0.0, f64::max)
    }

    /// Largest entry magnitude of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.clone() - b.clone()).magnitude())
            .fold(0.0, f64::max)
    }

    fn pivot_row(&self, col: usize, from: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in from..self.rows {
            let v = &self[(r, col)];
            if v.is_zero() {
                continue;
            }
            let mag = v.magnitude();
            if best.is_none_or(|(_, m)| mag > m) {
                best = Some((r, mag));
            }
        }
        best.map(|(r, _)| r)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub fn det(&self) -> T {
        assert!(self.is_square(), "determinant of a non-square matrix");
        let n = self.rows;
        match n {
            0 => return T::one(),
            1 => return self.data[0].clone(),
            2 => {
                return self.data[0].clone() * self.data[3].clone()
                    - self.data[1].clone() * self.data[2].clone()
            }
            _ => {}
        }
        let mut a = self.clone();
        let mut det = T::one();
        for c in 0..n {
            let Some(p) = a.pivot_row(c, c) else {
                return T::zero();
            };
            if p != c {
                a.swap_rows(p, c);
                det = -det;
            }
            let piv = a[(c, c)].clone();
            det = det * piv.clone();
            for r in c + 1..n {
                if a[(r, c)].is_zero() {
                    continue;
                }
                let f = a[(r, c)].clone() / piv.clone();
                for k in c + 1..n {
                    let v = a[(r, k)].clone() - f.clone() * a[(c, k)].clone();
                    a[(r, k)] = v;
                }
            }
        }
        det
    }

    /// Solves `self * X = rhs`; `None` when a pivot vanishes exactly.
    pub fn solve(&self, rhs: &Self) -> Option<Self> {
        assert!(self.is_square(), "solve with a non-square matrix");
        assert_eq!(self.rows, rhs.rows, "solve shape mismatch");
        let n = self.rows;
        let m = rhs.cols;
        let mut a = self.clone();
        let mut b = rhs.clone();
        for c in 0..n {
            let p = a.pivot_row(c, c)?;
            a.swap_rows(p, c);
            b.swap_rows(p, c);
            let piv = a[(c, c)].clone();
            for r in 0..n {
                if r == c || a[(r, c)].is_zero() {
                    continue;
                }
                let f = a[(r, c)].clone() / piv.clone();
                for k in c..n {
                    let v = a[(r, k)].clone() - f.clone() * a[(c, k)].clone();
                    a[(r, k)] = v;
                }
                for k in 0..m {
                    let v = b[(r, k)].clone() - f.clone() * b[(c, k)].clone();
                    b[(r, k)] = v;
                }
            }
        }
        for r in 0..n {
            let piv = a[(r, r)].clone();
            for k in 0..m {
                let v = b[(r, k)].clone() / piv.clone();
                b[(r, k)] = v;
            }
        }
        Some(b)
    }

    pub fn inverse(&self) -> Option<Self> {
        self.solve(&Matrix::identity(self.rows))
    }

    /// Matrix exponential.
    ///
    /// Nilpotent matrices use the terminating series and diagonal matrices
    /// the entrywise exponential, so both are exact over rationals. Other
    /// matrices need a floating scalar and use scaled Taylor series with
    /// repeated squaring.
    pub fn exp(&self) -> Option<Self> {
        assert!(self.is_square(), "exponential of a non-square matrix");
        let n = self.rows;
        if let Some(e) = self.nilpotent_exp() {
            return Some(e);
        }
        if self.is_diagonal() {
            let mut out = Matrix::zeros(n, n);
            for i in 0..n {
                out[(i, i)] = self[(i, i)].try_exp()?;
            }
            return Some(out);
        }
        if T::EXACT {
            return None;
        }
        let norm = (0..n)
            .map(|i| self.row(i).iter().map(Scalar::magnitude).sum::<f64>())
            .fold(0.0, f64::max);
        let squarings = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as u32
        } else {
            0
        };
        let scaled = self.scale(&T::from_f64(0.5f64.powi(squarings as i32)));
        let mut term = Matrix::identity(n);
        let mut sum = Matrix::identity(n);
        for k in 1..=18 {
            term = term.matmul(&scaled).scale(&T::from_ratio(1, k));
            sum = &sum + &term;
        }
        for _ in 0..squarings {
            sum = sum.matmul(&sum);
        }
        Some(sum)
    }

    fn nilpotent_exp(&self) -> Option<Self> {
        let n = self.rows;
        let mut term = Matrix::identity(n);
        let mut sum = Matrix::identity(n);
        for k in 1..=n as i64 {
            term = term.matmul(self);
            if term.is_zero() {
                return Some(sum);
            }
            term = term.scale(&T::from_ratio(1, k));
            sum = &sum + &term;
        }
        None
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols, "index out of range");
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols, "index out of range");
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Ring> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, o: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.shape(), o.shape(), "add shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&o.data)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
        }
    }
}

impl<T: Ring> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, o: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.shape(), o.shape(), "sub shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&o.data)
                .map(|(a, b)| a.clone() - b.clone())
                .collect(),
        }
    }
}

impl<T: Ring> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, o: &Matrix<T>) -> Matrix<T> {
        self.matmul(o)
    }
}

impl<T: Ring> Neg for &Matrix<T> {
    type Output = Matrix<T>;
    fn neg(self) -> Matrix<T> {
        self.map(|v| -v.clone())
    }
}

impl<T: Ring> Add for Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, o: Matrix<T>) -> Matrix<T> {
        &self + &o
    }
}

impl<T: Ring> Sub for Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, o: Matrix<T>) -> Matrix<T> {
        &self - &o
    }
}

impl<T: Ring> Mul for Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, o: Matrix<T>) -> Matrix<T> {
        self.matmul(&o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use proptest::prelude::*;

    fn q(v: i64) -> Rational {
        Rational::from_i64(v)
    }

    #[test]
    fn det_and_inverse_exact() {
        let a = Matrix::from_rows(vec![
            vec![q(2), q(-1), q(0)],
            vec![q(-1), q(2), q(-1)],
            vec![q(0), q(-1), q(2)],
        ]);
        assert_eq!(a.det(), q(4));
        let inv = a.inverse().unwrap();
        assert_eq!(a.matmul(&inv), Matrix::identity(3));
        assert_eq!(inv[(0, 0)], Rational::from_ratio(3, 4));
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        let a = Matrix::from_rows(vec![vec![q(1), q(2)], vec![q(2), q(4)]]);
        assert_eq!(a.det(), q(0));
        assert!(a.inverse().is_none());
    }

    #[test]
    fn nilpotent_exponential_is_polynomial() {
        let x = Matrix::<Rational>::unit(3, 0, 1).scale(&q(5));
        let e = x.exp().unwrap();
        assert_eq!(e, &Matrix::identity(3) + &x);
        let y = &Matrix::<Rational>::unit(3, 0, 1) + &Matrix::unit(3, 1, 2);
        let e = y.exp().unwrap();
        assert_eq!(e[(0, 2)], Rational::from_ratio(1, 2));
    }

    #[test]
    fn diagonal_exponential() {
        let h = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
        let e = h.exp().unwrap();
        assert!((e[(0, 0)] - std::f64::consts::E).abs() < 1e-15);
        assert!((e[(1, 1)] - 1.0 / std::f64::consts::E).abs() < 1e-15);
        assert!(Matrix::<Rational>::identity(2).exp().is_none());
    }

    #[test]
    fn general_exponential_matches_rotation() {
        let t = 2.5f64;
        let a = Matrix::from_rows(vec![vec![0.0, -t], vec![t, 0.0]]);
        let e = a.exp().unwrap();
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-13);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn det_is_multiplicative(v in proptest::collection::vec(-5i64..5, 18)) {
            let a = Matrix::from_fn(3, 3, |i, j| q(v[3 * i + j]));
            let b = Matrix::from_fn(3, 3, |i, j| q(v[9 + 3 * i + j]));
            prop_assert_eq!(a.matmul(&b).det(), a.det() * b.det());
        }

        #[test]
        fn float_inverse_roundtrip(v in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let a = &Matrix::from_fn(4, 4, |i, j| v[4 * i + j]) + &Matrix::identity(4).scale(&4.0);
            let inv = a.inverse().unwrap();
            prop_assert!(a.matmul(&inv).max_abs_diff(&Matrix::identity(4)) < 1e-12);
        }
    }
}
