//! Sparse vectors in exterior powers of the defining representation.
//!
//! A group element acting in the `j`-th exterior power is the `j`-th
//! compound of its defining matrix, so matrix elements between wedge
//! vectors reduce to minors of one `(n+1) x (n+1)` matrix.

use std::collections::BTreeMap;

use crate::matrix::{Matrix, Ring};
use crate::scalar::Scalar;

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All `j`-element subsets of `{1..n}` in lexicographic order.
pub fn subsets(n: usize, j: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, j: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == j {
            out.push(cur.clone());
            return;
        }
        for v in start..=n {
            if n - v + 1 < j - cur.len() {
                break;
            }
            cur.push(v);
            rec(v + 1, n, j, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::with_capacity(binomial(n, j));
    rec(1, n, j, &mut Vec::with_capacity(j), &mut out);
    out
}

/// `rho(E_ab) e_S` as `(sign, T)`, or `None` when it vanishes.
pub fn unit_action(s: &[usize], a: usize, b: usize) -> Option<(i64, Vec<usize>)> {
    if !s.contains(&b) {
        return None;
    }
    if a == b {
        return Some((1, s.to_vec()));
    }
    if s.contains(&a) {
        return None;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let between = s.iter().filter(|&&x| x > lo && x < hi).count();
    let mut t: Vec<usize> = s.iter().copied().filter(|&x| x != b).collect();
    t.push(a);
    t.sort_unstable();
    Some((if between % 2 == 0 { 1 } else { -1 }, t))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Wedge<T> {
    terms: BTreeMap<Vec<usize>, T>,
}

impl<T: Scalar> Wedge<T> {
    pub fn zero() -> Self {
        Wedge {
            terms: BTreeMap::new(),
        }
    }

    pub fn basis(s: Vec<usize>) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(s, T::one());
        Wedge { terms }
    }

    /// Highest vector `e_1 ^ ... ^ e_j`.
    pub fn highest(j: usize) -> Self {
        Wedge::basis((1..=j).collect())
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<usize>, &T)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, s: Vec<usize>, v: T) {
        let e = self.terms.entry(s.clone()).or_insert_with(T::zero);
        *e = e.clone() + v;
        if e.is_zero() {
            self.terms.remove(&s);
        }
    }

    pub fn scaled(&self, c: &T) -> Self {
        let mut out = Wedge::zero();
        for (s, v) in &self.terms {
            out.add_term(s.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (s, v) in &o.terms {
            out.add_term(s.clone(), v.clone());
        }
        out
    }

    /// `rho(E_ab) v` with 1-based `a`, `b`.
    pub fn apply_unit(&self, a: usize, b: usize) -> Self {
        let mut out = Wedge::zero();
        for (s, v) in &self.terms {
            if let Some((sign, t)) = unit_action(s, a, b) {
                out.add_term(t, v.clone() * T::from_i64(sign));
            }
        }
        out
    }

    /// `rho(Z) v` for a defining-representation matrix `Z`.
    pub fn apply(&self, z: &Matrix<T>) -> Self {
        let mut out = Wedge::zero();
        for a in 0..z.rows() {
            for b in 0..z.cols() {
                if z[(a, b)].is_zero() {
                    continue;
                }
                out = out.add(&self.apply_unit(a + 1, b + 1).scaled(&z[(a, b)]));
            }
        }
        out
    }

    pub fn dot(&self, o: &Self) -> T {
        self.terms
            .iter()
            .filter_map(|(s, v)| o.terms.get(s).map(|w| v.clone() * w.clone()))
            .fold(T::zero(), |a, b| a + b)
    }

    /// Dense coordinates in the lexicographic basis of `Lambda^j C^dim`.
    pub fn to_dense(&self, dim: usize, j: usize) -> Vec<T> {
        subsets(dim, j)
            .iter()
            .map(|s| self.terms.get(s).cloned().unwrap_or_else(T::zero))
            .collect()
    }
}

/// Minor `det K[S, T]` with 1-based index sets.
pub fn minor<T: Scalar>(k: &Matrix<T>, rows: &[usize], cols: &[usize]) -> T {
    let r: Vec<usize> = rows.iter().map(|x| x - 1).collect();
    let c: Vec<usize> = cols.iter().map(|x| x - 1).collect();
    k.submatrix(&r, &c).det()
}

/// `<bra| rho(K) |ket>` for wedge vectors of the same degree.
pub fn matrix_element<T: Scalar>(k: &Matrix<T>, bra: &Wedge<T>, ket: &Wedge<T>) -> T {
    let mut acc = T::zero();
    for (s, u) in bra.terms() {
        for (t, v) in ket.terms() {
            acc = acc + u.clone() * v.clone() * minor(k, s, t);
        }
    }
    acc
}

/// `<j| K |j>`: leading principal minor of order `j` (1 for `j = 0`).
pub fn principal<T: Scalar>(k: &Matrix<T>, j: usize) -> T {
    let idx: Vec<usize> = (0..j).collect();
    k.submatrix(&idx, &idx).det()
}

/// The `j`-th compound matrix: the group element in `Lambda^j`.
pub fn compound<T: Scalar>(k: &Matrix<T>, j: usize) -> Matrix<T> {
    let basis = subsets(k.rows(), j);
    let n = basis.len();
    Matrix::from_fn(n, n, |r, c| minor(k, &basis[r], &basis[c]))
}

/// Integer `rho(E_ab)` on `Lambda^j C^dim`, 1-based `a`, `b`.
pub fn unit_matrix(dim: usize, j: usize, a: usize, b: usize) -> Matrix<i64> {
    let basis = subsets(dim, j);
    let index: BTreeMap<&Vec<usize>, usize> =
        basis.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut m = Matrix::<i64>::zeros(basis.len(), basis.len());
    for (col, s) in basis.iter().enumerate() {
        if let Some((sign, t)) = unit_action(s, a, b) {
            m[(index[&t], col)] += sign;
        }
    }
    m
}

/// `rho(Z)` for a defining matrix over any ring, by linearity.
pub fn lift<T: Ring>(z: &Matrix<T>, j: usize) -> Matrix<T> {
    let dim = z.rows();
    let size = binomial(dim, j);
    let mut out = Matrix::<T>::zeros(size, size);
    for a in 0..dim {
        for b in 0..dim {
            if z[(a, b)].is_zero() {
                continue;
            }
            let u = unit_matrix(dim, j, a + 1, b + 1);
            for r in 0..size {
                for c in 0..size {
                    match u[(r, c)] {
                        0 => {}
                        1 => out[(r, c)] = out[(r, c)].clone() + z[(a, b)].clone(),
                        _ => out[(r, c)] = out[(r, c)].clone() - z[(a, b)].clone(),
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_are_lexicographic() {
        assert_eq!(
            subsets(4, 2),
            vec![
                vec![1, 2],
                vec![1, 3],
                vec![1, 4],
                vec![2, 3],
                vec![2, 4],
                vec![3, 4]
            ]
        );
        assert_eq!(subsets(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(binomial(8, 4), 70);
    }

    #[test]
    fn unit_action_signs() {
        assert_eq!(unit_action(&[1, 2, 4], 3, 1), Some((-1, vec![2, 3, 4])));
        assert_eq!(unit_action(&[1, 2], 3, 2), Some((1, vec![1, 3])));
        assert_eq!(unit_action(&[1, 2], 2, 1), None);
    }

    #[test]
    fn compound_is_multiplicative() {
        let a = Matrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let b = Matrix::from_fn(4, 4, |i, j| ((i * 2 + j * 5) % 7) as f64 - 3.0);
        for j in 0..=4 {
            let lhs = compound(&a.matmul(&b), j);
            let rhs = compound(&a, j).matmul(&compound(&b, j));
            assert!(lhs.max_abs_diff(&rhs) < 1e-9);
        }
    }

    #[test]
    fn lifted_algebra_element_matches_compound_derivative() {
        let z = Matrix::from_fn(
            4,
            4,
            |i, j| if i < j { (i + 2 * j) as f64 * 0.1 } else { 0.0 },
        );
        let t = 1e-6;
        let g = &Matrix::identity(4) + &z.scale(&t);
        let d = (&compound(&g, 2) - &Matrix::identity(6)).scale(&(1.0 / t));
        assert!(d.max_abs_diff(&lift(&z, 2)) < 1e-5);
    }

    #[test]
    fn wedge_matrix_element_matches_compound() {
        let k = Matrix::from_fn(4, 4, |i, j| 1.0 / (1.0 + i as f64 + 2.0 * j as f64));
        let c = compound(&k, 2);
        let bra = Wedge::<f64>::highest(2).apply_unit(3, 2);
        let ket = Wedge::highest(2).apply_unit(4, 1);
        let dense = c.bilinear(&bra.to_dense(4, 2), &ket.to_dense(4, 2));
        assert!((matrix_element(&k, &bra, &ket) - dense).abs() < 1e-14);
    }
}
