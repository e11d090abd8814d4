//! Univariate polynomials with coefficients stored lowest degree first.

use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Zero};

use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Poly<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn constant(c: T) -> Self {
        Poly::new(vec![c])
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        Poly::new(vec![T::zero(), T::one()])
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Degree, with the zero polynomial reported as 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: &T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * x.clone() + c.clone())
    }

    /// Evaluates with coefficients converted into another scalar type.
    pub fn eval_as<S: Scalar>(&self, x: &S, conv: impl Fn(&T) -> S) -> S {
        self.coeffs
            .iter()
            .rev()
            .fold(S::zero(), |acc, c| acc * x.clone() + conv(c))
    }

    pub fn derivative(&self) -> Self {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c.clone() * T::from_i64(k as i64))
                .collect(),
        )
    }

    /// Antiderivative vanishing at `x0`.
    pub fn integral_from(&self, x0: &T) -> Self {
        let mut c = Vec::with_capacity(self.coeffs.len() + 1);
        c.push(T::zero());
        for (k, a) in self.coeffs.iter().enumerate() {
            c.push(a.clone() / T::from_i64(k as i64 + 1));
        }
        let p = Poly::new(c);
        let shift = p.eval(x0);
        p - Poly::constant(shift)
    }
}

impl<T: Scalar> PartialEq for Poly<T> {
    fn eq(&self, o: &Self) -> bool {
        self.coeffs == o.coeffs
    }
}

impl<T: Scalar> Add for Poly<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        let get = |p: &Poly<T>, k: usize| p.coeffs.get(k).cloned().unwrap_or_else(T::zero);
        Poly::new((0..n).map(|k| get(&self, k) + get(&o, k)).collect())
    }
}

impl<T: Scalar> Sub for Poly<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<T: Scalar> Neg for Poly<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Poly {
            coeffs: self.coeffs.into_iter().map(|c| -c).collect(),
        }
    }
}

impl<T: Scalar> Mul for Poly<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        if self.coeffs.is_empty() || o.coeffs.is_empty() {
            return Poly::zero();
        }
        let mut c = vec![T::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                c[i + j] = c[i + j].clone() + a.clone() * b.clone();
            }
        }
        Poly::new(c)
    }
}

impl<T: Scalar> Zero for Poly<T> {
    fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }
    fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
}

impl<T: Scalar> One for Poly<T> {
    fn one() -> Self {
        Poly::constant(T::one())
    }
}

impl<T: Scalar> Matrix<Poly<T>> {
    pub fn eval(&self, x: &T) -> Matrix<T> {
        Matrix::from_fn(self.rows(), self.cols(), |i, j| self[(i, j)].eval(x))
    }

    pub fn integral_from(&self, x0: &T) -> Self {
        self.map(|p| p.integral_from(x0))
    }

    pub fn max_degree(&self) -> usize {
        self.data().iter().map(Poly::degree).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(v: i64) -> Rational {
        Rational::from_i64(v)
    }

    #[test]
    fn arithmetic_and_evaluation() {
        let p = Poly::new(vec![q(1), q(2)]);
        let sq = p.clone() * p.clone();
        assert_eq!(sq.coeffs(), &[q(1), q(4), q(4)]);
        assert_eq!(sq.eval(&q(3)), q(49));
        assert!((p.clone() - p).is_zero());
    }

    #[test]
    fn integral_vanishes_at_base_point() {
        let p = Poly::new(vec![q(3), q(0), q(6)]);
        let ip = p.integral_from(&q(2));
        assert_eq!(ip.eval(&q(2)), q(0));
        assert_eq!(ip.derivative(), p);
    }
}
