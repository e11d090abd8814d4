//! Fundamental representations of A_n realized on exterior powers.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use num_traits::Zero;

use crate::cartan::{grading_coefficients, CartanData, GradingVector, RedBlock, Site};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{Rational, Scalar};
use crate::wedge::{subsets, unit_matrix, Wedge};

#[derive(Clone, Debug)]
pub struct FundamentalRep {
    pub n: usize,
    pub j: usize,
    pub basis: Vec<Vec<usize>>,
    xplus: Vec<Matrix<i64>>,
    xminus: Vec<Matrix<i64>>,
    h: Vec<Matrix<i64>>,
    index: HashMap<Vec<usize>, usize>,
}

impl FundamentalRep {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `X^+_i`, 1-based.
    pub fn xp(&self, i: usize) -> &Matrix<i64> {
        &self.xplus[i - 1]
    }

    /// `X^-_i`, 1-based.
    pub fn xm(&self, i: usize) -> &Matrix<i64> {
        &self.xminus[i - 1]
    }

    /// `h_i`, 1-based.
    pub fn h(&self, i: usize) -> &Matrix<i64> {
        &self.h[i - 1]
    }

    pub fn index_of(&self, subset: &[usize]) -> Option<usize> {
        self.index.get(subset).copied()
    }

    /// Coordinates of the highest vector `e_1 ^ ... ^ e_j`.
    pub fn highest_vector(&self) -> Vec<i64> {
        let mut v = vec![0; self.dim()];
        v[0] = 1;
        v
    }

    pub fn identity(&self) -> Matrix<i64> {
        Matrix::identity(self.dim())
    }
}

/// Builds the representation on `Lambda^j`; `j = 0` and `j = n + 1` give the
/// one-dimensional trivial representation.
pub(crate) fn build_any(n: usize, j: usize) -> FundamentalRep {
    let dim = n + 1;
    let basis = subsets(dim, j);
    let index = basis
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    let xplus = (1..=n).map(|i| unit_matrix(dim, j, i, i + 1)).collect();
    let xminus = (1..=n).map(|i| unit_matrix(dim, j, i + 1, i)).collect();
    let h = (1..=n)
        .map(|i| &unit_matrix(dim, j, i, i) - &unit_matrix(dim, j, i + 1, i + 1))
        .collect();
    FundamentalRep {
        n,
        j,
        basis,
        xplus,
        xminus,
        h,
        index,
    }
}

pub fn build_fundamental_rep(n: usize, j: usize) -> Result<FundamentalRep> {
    if n == 0 {
        return Err(Error::InvalidRank(n));
    }
    if j == 0 || j > n {
        return Err(Error::InvalidRepresentation { n, j });
    }
    Ok(build_any(n, j))
}

type RepCache = RwLock<HashMap<(usize, usize), Arc<FundamentalRep>>>;

fn cache() -> &'static RepCache {
    static CACHE: OnceLock<RepCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Cached representation; readers share, first builder inserts.
pub fn fundamental_rep(n: usize, j: usize) -> Result<Arc<FundamentalRep>> {
    if let Some(rep) = cache().read().expect("rep cache poisoned").get(&(n, j)) {
        return Ok(rep.clone());
    }
    let rep = Arc::new(build_fundamental_rep(n, j)?);
    let mut guard = cache().write().expect("rep cache poisoned");
    Ok(guard.entry((n, j)).or_insert(rep).clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Tensor notation `(first, last)^±`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompositeRoot {
    pub first: usize,
    pub last: usize,
    pub sign: Sign,
}

impl CompositeRoot {
    pub fn plus(first: usize, last: usize) -> Self {
        CompositeRoot {
            first,
            last,
            sign: Sign::Plus,
        }
    }

    pub fn minus(first: usize, last: usize) -> Self {
        CompositeRoot {
            first,
            last,
            sign: Sign::Minus,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.first == self.last + 1
    }
}

/// `(i,j)^+ = [X^+_i, [X^+_{i+1}, [..., X^+_j]]]`; `(i,j)^-` is its
/// transpose and `(i,i-1)^±` the identity.
pub fn composite_root_generator(rep: &FundamentalRep, root: CompositeRoot) -> Result<Matrix<i64>> {
    let (i, j) = (root.first, root.last);
    let bad = Error::InvalidRoot { first: i, last: j };
    if i > j + 1 || i == 0 {
        return Err(bad);
    }
    if root.is_identity() {
        if i > rep.n + 1 {
            return Err(bad);
        }
        return Ok(rep.identity());
    }
    if j > rep.n {
        return Err(bad);
    }
    let mut acc = rep.xp(j).clone();
    for t in (i..j).rev() {
        acc = rep.xp(t).commutator(&acc);
    }
    Ok(match root.sign {
        Sign::Plus => acc,
        Sign::Minus => acc.transpose(),
    })
}

/// Nested commutator where identity factors are dropped rather than
/// annihilating the bracket.
pub fn nested_bracket(parts: &[Matrix<i64>], identity_flags: &[bool]) -> Matrix<i64> {
    let live: Vec<&Matrix<i64>> = parts
        .iter()
        .zip(identity_flags)
        .filter(|(_, &id)| !id)
        .map(|(p, _)| p)
        .collect();
    match live.split_last() {
        None => parts[0].clone(),
        Some((last, rest)) => rest
            .iter()
            .rev()
            .fold((*last).clone(), |acc, p| p.commutator(&acc)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    /// Lowering chain from `|m>`: `X^-_m`, `X^-_{m+1}`, ...
    First,
    /// Lowering chain from `|mbar>`: `X^-_mbar`, `X^-_{mbar-1}`, ...
    Last,
}

impl From<RedBlock> for Site {
    fn from(b: RedBlock) -> Site {
        Site { m: b.m, r: b.r }
    }
}

/// Lowering indices applied in order to the highest vector.
pub fn lowering_chain(site: &Site, kind: BasisKind) -> (usize, Vec<usize>) {
    match kind {
        BasisKind::First => (site.m, (site.m..site.m + site.r).collect()),
        BasisKind::Last => (site.mbar(), (site.m..=site.mbar()).rev().collect()),
    }
}

/// Orthonormal first/last lowering basis of a red block, as dense coordinates.
pub fn red_basis(rep: &FundamentalRep, site: &Site, kind: BasisKind) -> Result<Vec<Vec<i64>>> {
    let (j, chain) = lowering_chain(site, kind);
    if rep.j != j {
        return Err(Error::InvalidRepresentation { n: rep.n, j: rep.j });
    }
    let mut v = rep.highest_vector();
    let mut out = vec![v.clone()];
    for &i in &chain {
        v = rep.xm(i).mul_vec(&v);
        out.push(v.clone());
    }
    for (a, va) in out.iter().enumerate() {
        for (b, vb) in out.iter().enumerate() {
            let d: i64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
            if d != i64::from(a == b) {
                return Err(Error::Construction(format!(
                    "red basis vectors {a},{b} have inner product {d}"
                )));
            }
        }
    }
    Ok(out)
}

/// Red block basis vectors as sparse wedges; valid also for trivial end representations.
pub fn red_basis_wedges<T: Scalar>(site: &Site, kind: BasisKind) -> Vec<Wedge<T>> {
    let (j, chain) = lowering_chain(site, kind);
    let mut v = Wedge::highest(j);
    let mut out = vec![v.clone()];
    for &i in &chain {
        v = v.apply_unit(i + 1, i);
        out.push(v.clone());
    }
    out
}

/// Eigenvalues of the `h_i` on a weight vector, or `None` if it is not one.
pub fn weight_of(rep: &FundamentalRep, v: &[i64]) -> Option<Vec<i64>> {
    let pivot = v.iter().position(|&x| x != 0)?;
    (1..=rep.n)
        .map(|i| {
            let hv = rep.h(i).mul_vec(v);
            let lambda = hv[pivot] / v[pivot];
            (hv.iter().zip(v).all(|(a, b)| *a == lambda * b)).then_some(lambda)
        })
        .collect()
}

/// Exact check of the Chevalley relations and highest-vector conditions.
/// Returns the number of relations checked and the list of violations.
pub fn check_chevalley(rep: &FundamentalRep, cd: &CartanData) -> (usize, Vec<String>) {
    let n = rep.n;
    let mut count = 0;
    let mut bad = Vec::new();
    let mut expect = |ok: bool, what: String| {
        count += 1;
        if !ok {
            bad.push(what);
        }
    };
    for i in 1..=n {
        for j in 1..=n {
            expect(
                rep.h(i).commutator(rep.h(j)).is_zero(),
                format!("[h{i},h{j}]"),
            );
            let kji = cd.k[(j - 1, i - 1)];
            expect(
                rep.h(i).commutator(rep.xp(j)) == rep.xp(j).scale(&kji),
                format!("[h{i},X+{j}]"),
            );
            expect(
                rep.h(i).commutator(rep.xm(j)) == rep.xm(j).scale(&-kji),
                format!("[h{i},X-{j}]"),
            );
            let want = if i == j {
                rep.h(j).clone()
            } else {
                Matrix::zeros(rep.dim(), rep.dim())
            };
            expect(
                rep.xp(i).commutator(rep.xm(j)) == want,
                format!("[X+{i},X-{j}]"),
            );
        }
        let v = rep.highest_vector();
        expect(
            rep.xp(i).mul_vec(&v).iter().all(|&x| x == 0),
            format!("X+{i}|hw>"),
        );
        let hv = rep.h(i).mul_vec(&v);
        let delta = i64::from(i == rep.j);
        expect(
            hv.iter().zip(&v).all(|(a, b)| *a == delta * b),
            format!("h{i}|hw>"),
        );
    }
    (count, bad)
}

/// Checks `[H, X^±_i] = ±c_i X^±_i` exactly for `H = sum (K^{-1}c)_i h_i`.
pub fn check_grading_operator(
    rep: &FundamentalRep,
    cd: &CartanData,
    c: &GradingVector,
) -> Result<bool> {
    let w = grading_coefficients(cd, c)?;
    let dim = rep.dim();
    let mut hop = Matrix::<Rational>::zeros(dim, dim);
    for (i, wi) in w.iter().enumerate() {
        hop = &hop + &Matrix::<Rational>::from_i64(rep.h(i + 1)).scale(wi);
    }
    Ok((1..=rep.n).all(|i| {
        let ci = Rational::from_i64(c.get(i) as i64);
        let xp = Matrix::<Rational>::from_i64(rep.xp(i));
        let xm = Matrix::<Rational>::from_i64(rep.xm(i));
        hop.commutator(&xp) == xp.scale(&ci) && hop.commutator(&xm) == xm.scale(&-ci)
    }))
}

/// Grade of a defining-representation algebra element under `H`:
/// `Some(k)` when `[H, Z] = k Z` exactly.
pub fn grade_of(z: &Matrix<i64>, cd: &CartanData, c: &GradingVector) -> Result<Option<Rational>> {
    let w = grading_coefficients(cd, c)?;
    let dim = cd.n + 1;
    let mut hop = Matrix::<Rational>::zeros(dim, dim);
    for (i, wi) in w.iter().enumerate() {
        hop[(i, i)] = hop[(i, i)].clone() + wi.clone();
        hop[(i + 1, i + 1)] = hop[(i + 1, i + 1)].clone() - wi.clone();
    }
    let zq = Matrix::<Rational>::from_i64(z);
    let comm = hop.commutator(&zq);
    let mut k: Option<Rational> = None;
    for (a, b) in zq.data().iter().zip(comm.data()) {
        if a.is_zero() {
            if !b.is_zero() {
                return Ok(None);
            }
            continue;
        }
        let ratio = b.clone() / a.clone();
        match &k {
            None => k = Some(ratio),
            Some(prev) if *prev != ratio => return Ok(None),
            _ => {}
        }
    }
    Ok(Some(k.unwrap_or_else(Rational::zero)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::cartan_matrix;

    #[test]
    fn defining_rep_of_a1() {
        let r = build_fundamental_rep(1, 1).unwrap();
        assert_eq!(r.dim(), 2);
        assert_eq!(*r.h(1), Matrix::from_rows(vec![vec![1, 0], vec![0, -1]]));
    }

    #[test]
    fn second_rep_of_a2() {
        let r = build_fundamental_rep(2, 2).unwrap();
        assert_eq!(r.dim(), 3);
        assert_eq!(r.basis[0], vec![1, 2]);
        assert!(build_fundamental_rep(2, 3).is_err());
        assert!(build_fundamental_rep(2, 0).is_err());
    }

    #[test]
    fn chevalley_relations_in_small_reps() {
        for n in 1..=5 {
            let cd = cartan_matrix(n).unwrap();
            for j in 1..=n {
                let rep = fundamental_rep(n, j).unwrap();
                let (count, bad) = check_chevalley(&rep, &cd);
                assert!(bad.is_empty(), "n={n} j={j}: {bad:?}");
                assert_eq!(count, 4 * n * n + 2 * n);
            }
        }
    }

    #[test]
    fn grading_operator_eigenvalues() {
        let cd = cartan_matrix(4).unwrap();
        let c: GradingVector = "0,1,0,1".parse().unwrap();
        for j in 1..=4 {
            assert!(check_grading_operator(&fundamental_rep(4, j).unwrap(), &cd, &c).unwrap());
        }
    }

    #[test]
    fn composite_roots() {
        let r = build_fundamental_rep(2, 1).unwrap();
        assert_eq!(
            composite_root_generator(&r, CompositeRoot::plus(1, 1)).unwrap(),
            *r.xp(1)
        );
        assert_eq!(
            composite_root_generator(&r, CompositeRoot::plus(2, 1)).unwrap(),
            Matrix::identity(3)
        );
        assert_eq!(
            composite_root_generator(&r, CompositeRoot::plus(1, 2)).unwrap(),
            Matrix::unit(3, 0, 2)
        );
        assert_eq!(
            composite_root_generator(&r, CompositeRoot::minus(1, 2)).unwrap(),
            Matrix::unit(3, 2, 0)
        );
        assert!(composite_root_generator(&r, CompositeRoot::plus(3, 1)).is_err());
        let r4 = build_fundamental_rep(4, 1).unwrap();
        for i in 1..=4 {
            for j in i..=4 {
                let g = composite_root_generator(&r4, CompositeRoot::plus(i, j)).unwrap();
                assert_eq!(g, Matrix::unit(5, i - 1, j));
            }
        }
    }

    #[test]
    fn red_basis_examples() {
        let r = build_fundamental_rep(2, 1).unwrap();
        let b = red_basis(&r, &Site { m: 1, r: 1 }, BasisKind::First).unwrap();
        assert_eq!(b, vec![vec![1, 0, 0], vec![0, 1, 0]]);
        let r3 = build_fundamental_rep(3, 1).unwrap();
        let b = red_basis(&r3, &Site { m: 1, r: 2 }, BasisKind::First).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(
            b[2],
            r3.xm(2).mul_vec(&r3.xm(1).mul_vec(&r3.highest_vector()))
        );
        let r0 = red_basis(&r3, &Site { m: 1, r: 0 }, BasisKind::First).unwrap();
        assert_eq!(r0, vec![r3.highest_vector()]);
        let r42 = build_fundamental_rep(4, 3).unwrap();
        let last = red_basis(&r42, &Site { m: 2, r: 2 }, BasisKind::Last).unwrap();
        assert_eq!(last.len(), 3);
        assert!(red_basis(&r42, &Site { m: 2, r: 2 }, BasisKind::First).is_err());
    }

    #[test]
    fn raising_walks_back_along_red_basis() {
        let rep = build_fundamental_rep(5, 2).unwrap();
        let site = Site { m: 2, r: 3 };
        let b = red_basis(&rep, &site, BasisKind::First).unwrap();
        let (_, chain) = lowering_chain(&site, BasisKind::First);
        for k in 0..b.len() {
            for s in 1..=5 {
                let img = rep.xp(s).mul_vec(&b[k]);
                if k > 0 && s == chain[k - 1] {
                    assert_eq!(img, b[k - 1]);
                } else {
                    assert!(img.iter().all(|&x| x == 0), "k={k} s={s}");
                }
            }
        }
    }

    #[test]
    fn weights_of_red_basis() {
        let rep = build_fundamental_rep(3, 1).unwrap();
        let b = red_basis(&rep, &Site { m: 1, r: 1 }, BasisKind::First).unwrap();
        assert_eq!(weight_of(&rep, &b[1]), Some(vec![-1, 1, 0]));
    }

    #[test]
    fn concurrent_cache_access() {
        let reps: Vec<_> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..8)
                .map(|_| s.spawn(|| fundamental_rep(5, 3).unwrap()))
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(reps.windows(2).all(|w| Arc::ptr_eq(&w[0], &w[1])));
    }
}
