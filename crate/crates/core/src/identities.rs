//! Matrix elements of group elements and the Jacobi-type determinant
//! identities between highest-vector matrix elements.

use num_traits::Zero;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cartan::{cartan_matrix, CartanData};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rep::{weight_of, FundamentalRep};
use crate::scalar::{Dual, Rational, Scalar};
use crate::wedge::{compound, matrix_element as wedge_element, principal, Wedge};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    XPlus(usize),
    XMinus(usize),
    H(usize),
}

impl Generator {
    /// Defining-representation matrix.
    pub fn matrix<T: Scalar>(&self, n: usize) -> Matrix<T> {
        let d = n + 1;
        match *self {
            Generator::XPlus(i) => Matrix::unit(d, i - 1, i),
            Generator::XMinus(i) => Matrix::unit(d, i, i - 1),
            Generator::H(i) => &Matrix::unit(d, i - 1, i - 1) - &Matrix::unit(d, i, i),
        }
    }

    pub fn is_nilpotent(&self) -> bool {
        !matches!(self, Generator::H(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor<T> {
    pub generator: Generator,
    pub t: T,
}

/// A group element of SL(n+1), stored through its defining matrix; the
/// element in the `j`-th fundamental representation is the `j`-th compound.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement<T> {
    pub n: usize,
    pub defining: Matrix<T>,
    pub factors: Vec<Factor<T>>,
}

impl<T: Scalar> GroupElement<T> {
    pub fn identity(n: usize) -> Self {
        GroupElement {
            n,
            defining: Matrix::identity(n + 1),
            factors: Vec::new(),
        }
    }

    pub fn from_matrix(n: usize, defining: Matrix<T>) -> Result<Self> {
        if defining.shape() != (n + 1, n + 1) {
            return Err(Error::Dimension(format!("expected {0}x{0} matrix", n + 1)));
        }
        Ok(GroupElement {
            n,
            defining,
            factors: Vec::new(),
        })
    }

    /// Ordered product of `exp(t Z)` factors.
    pub fn from_factors(n: usize, factors: Vec<Factor<T>>) -> Result<Self> {
        let mut g = Matrix::identity(n + 1);
        for f in &factors {
            let z = f.generator.matrix::<T>(n).scale(&f.t);
            let e = z.exp().ok_or_else(|| {
                Error::UnsupportedExact(format!(
                    "exponential of {:?} with non-zero coefficient",
                    f.generator
                ))
            })?;
            g = g.matmul(&e);
        }
        Ok(GroupElement {
            n,
            defining: g,
            factors,
        })
    }

    /// The element in the `j`-th fundamental representation (`0 <= j <= n+1`).
    pub fn in_rep(&self, j: usize) -> Matrix<T> {
        compound(&self.defining, j)
    }

    /// `<j|G|j>`, with `<0> = <n+1> = 1` for unimodular elements.
    pub fn hv(&self, j: usize) -> T {
        principal(&self.defining, j)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> GroupElement<U> {
        GroupElement {
            n: self.n,
            defining: self.defining.map(&f),
            factors: self
                .factors
                .iter()
                .map(|x| Factor {
                    generator: x.generator,
                    t: f(&x.t),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Infinitesimal left or right regular shift by a generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegularShift {
    pub side: Side,
    pub generator: Generator,
}

impl RegularShift {
    /// `G -> (1 + eps Z) G` or `G (1 + eps Z)` as a dual-number element.
    pub fn apply<T: Scalar>(&self, g: &Matrix<T>, n: usize) -> Matrix<Dual<T>> {
        let z: Matrix<T> = self.generator.matrix(n);
        let shifted = match self.side {
            Side::Left => z.matmul(g),
            Side::Right => g.matmul(&z),
        };
        Matrix::from_fn(g.rows(), g.cols(), |i, j| {
            Dual::new(g[(i, j)].clone(), shifted[(i, j)].clone())
        })
    }
}

/// `bra^T G_j ket` in the `j`-th fundamental representation.
pub fn matrix_element<T: Scalar>(
    g: &GroupElement<T>,
    bra: &[T],
    ket: &[T],
    rep: &FundamentalRep,
) -> Result<T> {
    if rep.n != g.n || bra.len() != rep.dim() || ket.len() != rep.dim() {
        return Err(Error::Dimension(format!(
            "vectors of length {}/{} in a representation of dimension {}",
            bra.len(),
            ket.len(),
            rep.dim()
        )));
    }
    Ok(g.in_rep(rep.j).bilinear(bra, ket))
}

/// Product `prod_i <i|G|i>^{l_i}` over `i = 1..n`.
pub fn weight_product<T: Scalar>(g: &Matrix<T>, l: &[i64]) -> Result<T> {
    let mut acc = T::one();
    for (i, &li) in l.iter().enumerate() {
        if li == 0 {
            continue;
        }
        let v = principal(g, i + 1);
        if li < 0 && v.is_zero() {
            return Err(Error::Singular(format!("<{}|G|{}> vanishes", i + 1, i + 1)));
        }
        acc = acc * v.powi(li);
    }
    Ok(acc)
}

pub(crate) fn lowered<T: Scalar>(j: usize, chain: &[usize]) -> Wedge<T> {
    let mut v = Wedge::highest(j);
    for &i in chain {
        v = v.apply_unit(i + 1, i);
    }
    v
}

/// `<j| X^+_{a_1} ... X^+_{a_p} G X^-_{b_q} ... X^-_{b_1} |j>` where the
/// raising operators act on the bra and the lowering ones on the ket.
pub fn shifted_element<T: Scalar>(
    g: &Matrix<T>,
    j: usize,
    bra_chain: &[usize],
    ket_chain: &[usize],
) -> T {
    wedge_element(g, &lowered(j, bra_chain), &lowered(j, ket_chain))
}

/// The 2x2 determinant of the first Jacobi identity, before normalization.
pub fn first_jacobi_det<T: Scalar>(g: &Matrix<T>, j: usize) -> T {
    let a = shifted_element(g, j, &[j], &[j]);
    let b = shifted_element(g, j, &[j], &[]);
    let c = shifted_element(g, j, &[], &[j]);
    let d = principal(g, j);
    a * d - b * c
}

fn relative(res: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        res / scale.max(1e-300)
    } else {
        res
    }
}

/// Residual of `det/<j>^2 - prod_i <i>^{-K_ji}`.
pub fn check_first_jacobi<T: Scalar>(g: &GroupElement<T>, j: usize) -> Result<T> {
    let cd = cartan_matrix(g.n)?;
    if j == 0 || j > g.n {
        return Err(Error::InvalidRepresentation { n: g.n, j });
    }
    let d = g.hv(j);
    if d.is_zero() {
        return Err(Error::Singular(format!("<{j}|G|{j}> vanishes")));
    }
    let lhs = first_jacobi_det(&g.defining, j) / (d.clone() * d);
    let l: Vec<i64> = (0..g.n).map(|i| -cd.k[(j - 1, i)]).collect();
    Ok(lhs - weight_product(&g.defining, &l)?)
}

/// First Jacobi residual relative to the size of the right-hand side.
pub fn first_jacobi_relative<T: Scalar>(g: &GroupElement<T>, j: usize) -> Result<f64> {
    let cd = cartan_matrix(g.n)?;
    let l: Vec<i64> = (0..g.n).map(|i| -cd.k[(j - 1, i)]).collect();
    let scale = weight_product(&g.defining, &l)?.magnitude();
    Ok(relative(check_first_jacobi(g, j)?.magnitude(), scale))
}

/// Residual of the second Jacobi identity for adjacent roots `i`, `j`.
pub fn check_second_jacobi<T: Scalar>(g: &GroupElement<T>, i: usize, j: usize) -> Result<T> {
    let cd = cartan_matrix(g.n)?;
    if i == j || i == 0 || j == 0 || i > g.n || j > g.n || cd.k[(i - 1, j - 1)] == 0 {
        return Err(Error::Dimension(format!("roots {i},{j} are not adjacent")));
    }
    let kij = T::from_i64(cd.k[(i - 1, j - 1)]);
    let kji = T::from_i64(cd.k[(j - 1, i - 1)]);
    let gj = g.hv(j);
    let gi = g.hv(i);
    if gi.is_zero() || gj.is_zero() {
        return Err(Error::Singular(format!("<{i}> or <{j}> vanishes")));
    }
    let m = &g.defining;
    let t1 = shifted_element(m, j, &[j, i], &[]) / gj.clone();
    let t2 = shifted_element(m, i, &[i, j], &[]) / gi.clone();
    let t3 = (shifted_element(m, j, &[j], &[]) / gj) * (shifted_element(m, i, &[i], &[]) / gi);
    Ok(kij.clone() * t1 + kji.clone() * t2 + kij * kji * t3)
}

/// A function on the group, evaluated on defining matrices over any scalar.
pub trait GroupFunction {
    fn eval<S: Scalar>(&self, g: &Matrix<S>) -> Result<S>;
}

/// `<j|G|j>`.
pub struct HighestElement(pub usize);

impl GroupFunction for HighestElement {
    fn eval<S: Scalar>(&self, g: &Matrix<S>) -> Result<S> {
        Ok(principal(g, self.0))
    }
}

/// The unnormalized first-Jacobi determinant, of weight `e_{j-1} + e_{j+1}`.
pub struct FirstJacobiDet(pub usize);

impl GroupFunction for FirstJacobiDet {
    fn eval<S: Scalar>(&self, g: &Matrix<S>) -> Result<S> {
        Ok(first_jacobi_det(g, self.0))
    }
}

/// Leading principal minor of `<alpha|G|alpha'>` over a list of vectors
/// of the `j`-th representation.
pub struct PrincipalMinor {
    pub j: usize,
    pub basis: Vec<Vec<i64>>,
}

impl GroupFunction for PrincipalMinor {
    fn eval<S: Scalar>(&self, g: &Matrix<S>) -> Result<S> {
        let gj = compound(g, self.j);
        let vecs: Vec<Vec<S>> = self
            .basis
            .iter()
            .map(|v| v.iter().map(|&x| S::from_i64(x)).collect())
            .collect();
        let s = vecs.len();
        Ok(Matrix::from_fn(s, s, |a, b| gj.bilinear(&vecs[a], &vecs[b])).det())
    }
}

/// A fixed generic unipotent test element, used to probe annihilation
/// conditions away from the identity.
pub fn probe_element<T: Scalar>(n: usize) -> Matrix<T> {
    let d = n + 1;
    let up = Matrix::from_fn(d, d, |i, j| {
        if i < j {
            T::from_ratio(((3 * i + 5 * j) % 7) as i64 - 3, 5)
        } else if i == j {
            T::one()
        } else {
            T::zero()
        }
    });
    let low = Matrix::from_fn(d, d, |i, j| {
        if i > j {
            T::from_ratio(((2 * i + 3 * j) % 5) as i64 - 2, 3)
        } else if i == j {
            T::one()
        } else {
            T::zero()
        }
    });
    up.matmul(&low)
}

fn near_zero<T: Scalar>(v: &T, scale: f64) -> bool {
    if T::EXACT {
        v.is_zero()
    } else {
        v.magnitude() <= 1e-9 * scale.max(1.0)
    }
}

/// Checks the highest-function conditions of `f` with weight `l` at a probe
/// element and returns the constant `C` with `f = C prod <i>^{l_i}`,
/// obtained by evaluating at the identity.
pub fn highest_weight_factorization<T: Scalar, F: GroupFunction>(
    f: &F,
    n: usize,
    l: &[i64],
) -> Result<T> {
    if l.len() != n {
        return Err(Error::Dimension(format!(
            "weight of length {} for rank {n}",
            l.len()
        )));
    }
    let g0 = probe_element::<T>(n);
    let f0 = f.eval(&g0)?;
    let scale = f0.magnitude();
    for i in 1..=n {
        for shift in [
            RegularShift {
                side: Side::Left,
                generator: Generator::XMinus(i),
            },
            RegularShift {
                side: Side::Right,
                generator: Generator::XPlus(i),
            },
        ] {
            let d = f.eval(&shift.apply(&g0, n))?.du;
            if !near_zero(&d, scale) {
                return Err(Error::NotHighest(format!("{shift:?} derivative {d:?}")));
            }
        }
        for side in [Side::Left, Side::Right] {
            let d = f
                .eval(
                    &RegularShift {
                        side,
                        generator: Generator::H(i),
                    }
                    .apply(&g0, n),
                )?
                .du;
            let want = f0.clone() * T::from_i64(l[i - 1]);
            if !near_zero(&(d - want), scale) {
                return Err(Error::NotHighest(format!("weight {l:?} fails at h_{i}")));
            }
        }
    }
    let id = Matrix::<T>::identity(n + 1);
    Ok(f.eval(&id)? / weight_product(&id, l)?)
}

/// Number of lowering generators needed to reach a weight from `e_j`.
fn lowering_depth(cd: &CartanData, j: usize, weight: &[i64]) -> Result<i64> {
    let rhs: Vec<Rational> = (1..=cd.n)
        .map(|i| Rational::from_i64(i64::from(i == j) - weight[i - 1]))
        .collect();
    let k = cd.kinv.mul_vec(&rhs);
    let total = k.iter().fold(Rational::zero(), |a, b| a + b.clone());
    if !total.is_integer() || k.iter().any(|x| *x < Rational::zero()) {
        return Err(Error::InvalidBasis(format!(
            "weight {weight:?} is not below e_{j}"
        )));
    }
    Ok(total.to_integer().try_into().unwrap_or(i64::MAX))
}

/// Leading `s x s` minor of `<alpha|G|alpha'>` and its highest-vector
/// prediction `C prod <i>^{l_i}` with `C` fixed at the identity.
pub fn generalized_jacobi_minor<T: Scalar>(
    g: &GroupElement<T>,
    rep: &FundamentalRep,
    basis: &[Vec<i64>],
    s: usize,
) -> Result<(T, T)> {
    if s == 0 || s > basis.len() {
        return Err(Error::Dimension(format!(
            "prefix {s} of a basis of {}",
            basis.len()
        )));
    }
    let cd = cartan_matrix(rep.n)?;
    let mut l = vec![0i64; rep.n];
    let mut last_depth = -1;
    for v in &basis[..s] {
        let w = weight_of(rep, v)
            .ok_or_else(|| Error::InvalidBasis("vector is not a weight vector".into()))?;
        let depth = lowering_depth(&cd, rep.j, &w)?;
        if depth < last_depth {
            return Err(Error::InvalidBasis(
                "basis not ordered by lowering depth".into(),
            ));
        }
        last_depth = depth;
        for (li, wi) in l.iter_mut().zip(&w) {
            *li += wi;
        }
    }
    let f = PrincipalMinor {
        j: rep.j,
        basis: basis[..s].to_vec(),
    };
    let minor = f.eval(&g.defining)?;
    let c: T = f.eval(&Matrix::identity(rep.n + 1))?;
    let predicted = c * weight_product(&g.defining, &l)?;
    Ok((minor, predicted))
}

/// Deterministic generator for sample `index` of a run with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Random coefficient in `[-1, 1]`; dyadic with denominator 64 in exact mode.
pub fn random_coefficient<T: Scalar, R: Rng>(rng: &mut R, scale: f64) -> T {
    if T::EXACT {
        let k: i64 = rng.gen_range(-64..=64);
        T::from_ratio(k, 64) * T::from_f64(scale)
    } else {
        T::from_f64(rng.gen_range(-1.0..=1.0) * scale)
    }
}

/// Product of `2n` single-generator exponentials with coefficients in
/// `[-1, 1]`. Exact scalars use only nilpotent generators. Samples with a
/// vanishing highest-vector element are redrawn.
pub fn random_group_element<T: Scalar, R: Rng>(n: usize, rng: &mut R) -> GroupElement<T> {
    loop {
        let factors: Vec<Factor<T>> = (0..2 * n)
            .map(|_| {
                let i = rng.gen_range(1..=n);
                let kinds = if T::EXACT { 2 } else { 3 };
                let generator = match rng.gen_range(0..kinds) {
                    0 => Generator::XPlus(i),
                    1 => Generator::XMinus(i),
                    _ => Generator::H(i),
                };
                Factor {
                    generator,
                    t: random_coefficient(rng, 1.0),
                }
            })
            .collect();
        let g = GroupElement::from_factors(n, factors).expect("generators exponentiate");
        if (1..=n).all(|j| g.hv(j).magnitude() > 1e-6) {
            return g;
        }
    }
}

/// `(1 + U)(1 + L)` with random strictly triangular `U`, `L` of entry size
/// `scale`, redrawn until all leading principal minors are away from zero.
pub fn random_unipotent<T: Scalar, R: Rng>(n: usize, scale: f64, rng: &mut R) -> Matrix<T> {
    let d = n + 1;
    loop {
        let up = Matrix::from_fn(d, d, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => random_coefficient(rng, scale),
            std::cmp::Ordering::Equal => T::one(),
            std::cmp::Ordering::Greater => T::zero(),
        });
        let low = Matrix::from_fn(d, d, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => random_coefficient(rng, scale),
            std::cmp::Ordering::Equal => T::one(),
            std::cmp::Ordering::Less => T::zero(),
        });
        let k = up.matmul(&low);
        if (1..=n).all(|j| principal(&k, j).magnitude() > 1e-3) {
            return k;
        }
    }
}

/// `true` if the function is annihilated by the left `X^-` and right `X^+`
/// shifts at `g` (checked through first-order dual evaluation).
pub fn annihilated_by_shifts<T: Scalar, F: GroupFunction>(
    f: &F,
    g: &Matrix<T>,
    n: usize,
    tol: f64,
) -> Result<bool> {
    let scale = f.eval(g)?.magnitude().max(1.0);
    for i in 1..=n {
        for shift in [
            RegularShift {
                side: Side::Left,
                generator: Generator::XMinus(i),
            },
            RegularShift {
                side: Side::Right,
                generator: Generator::XPlus(i),
            },
        ] {
            let d = f.eval(&shift.apply(g, n))?.du;
            let ok = if T::EXACT {
                d.is_zero()
            } else {
                d.magnitude() <= tol * scale
            };
            if !ok {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Central finite-difference version of the shift derivative, float only.
pub fn shift_derivative_fd<F: GroupFunction>(
    f: &F,
    g: &Matrix<f64>,
    shift: RegularShift,
    n: usize,
    t: f64,
) -> Result<f64> {
    let z: Matrix<f64> = shift.generator.matrix(n);
    let step = |s: f64| -> Result<f64> {
        let e = z.scale(&s).exp().expect("float exponential");
        let m = match shift.side {
            Side::Left => e.matmul(g),
            Side::Right => g.matmul(&e),
        };
        f.eval(&m)
    };
    Ok((step(t)? - step(-t)?) / (2.0 * t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::Site;
    use crate::rep::{build_fundamental_rep, red_basis, BasisKind};

    fn q(a: i64, b: i64) -> Rational {
        Rational::from_ratio(a, b)
    }

    #[test]
    fn matrix_element_examples() {
        let rep = build_fundamental_rep(1, 1).unwrap();
        let hw = vec![1.0, 0.0];
        let id = GroupElement::<f64>::identity(1);
        assert_eq!(matrix_element(&id, &hw, &hw, &rep).unwrap(), 1.0);
        let g = GroupElement::from_factors(
            1,
            vec![Factor {
                generator: Generator::XMinus(1),
                t: 0.7,
            }],
        )
        .unwrap();
        assert_eq!(matrix_element(&g, &hw, &hw, &rep).unwrap(), 1.0);
        let g = GroupElement::from_factors(
            1,
            vec![Factor {
                generator: Generator::H(1),
                t: 1.0,
            }],
        )
        .unwrap();
        assert!((matrix_element(&g, &hw, &hw, &rep).unwrap() - std::f64::consts::E).abs() < 1e-15);
        assert!(matrix_element(&g, &[1.0], &hw, &rep).is_err());
    }

    #[test]
    fn rep_matrices_agree_with_exponentials_in_rep() {
        let mut rng = sample_rng(3, 0);
        let g = random_group_element::<f64, _>(3, &mut rng);
        for j in 1..=3 {
            let rep = build_fundamental_rep(3, j).unwrap();
            let mut direct = Matrix::<f64>::identity(rep.dim());
            for f in &g.factors {
                let z = match f.generator {
                    Generator::XPlus(i) => Matrix::from_i64(rep.xp(i)),
                    Generator::XMinus(i) => Matrix::from_i64(rep.xm(i)),
                    Generator::H(i) => Matrix::from_i64(rep.h(i)),
                };
                direct = direct.matmul(&z.scale(&f.t).exp().unwrap());
            }
            assert!(direct.max_abs_diff(&g.in_rep(j)) < 1e-12);
        }
    }

    #[test]
    fn first_jacobi_examples() {
        for j in 1..=3 {
            assert_eq!(
                check_first_jacobi(&GroupElement::<Rational>::identity(3), j).unwrap(),
                q(0, 1)
            );
        }
        let g = GroupElement::from_factors(
            1,
            vec![Factor {
                generator: Generator::XMinus(1),
                t: q(3, 2),
            }],
        )
        .unwrap();
        assert_eq!(first_jacobi_det(&g.defining, 1), q(1, 1));
        assert_eq!(check_first_jacobi(&g, 1).unwrap(), q(0, 1));
        let mut rng = sample_rng(11, 0);
        let g = random_group_element::<f64, _>(2, &mut rng);
        assert_eq!(g.factors.len(), 4);
        let g6 = GroupElement::from_factors(
            2,
            (0..6)
                .map(|k| Factor {
                    generator: [Generator::XMinus(1), Generator::H(2), Generator::XPlus(2)][k % 3],
                    t: 0.3 * (k as f64) - 0.7,
                })
                .collect(),
        )
        .unwrap();
        for j in 1..=2 {
            assert!(check_first_jacobi(&g, j).unwrap().abs() < 1e-10);
            assert!(check_first_jacobi(&g6, j).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn second_jacobi_examples() {
        assert_eq!(
            check_second_jacobi(&GroupElement::<Rational>::identity(2), 1, 2).unwrap(),
            q(0, 1)
        );
        let g = GroupElement::from_factors(
            2,
            vec![
                Factor {
                    generator: Generator::XMinus(1),
                    t: 0.4f64,
                },
                Factor {
                    generator: Generator::XMinus(2),
                    t: -0.9,
                },
                Factor {
                    generator: Generator::XMinus(1),
                    t: 0.25,
                },
            ],
        )
        .unwrap();
        assert!(check_second_jacobi(&g, 1, 2).unwrap().abs() < 1e-12);
        let mut rng = sample_rng(5, 1);
        let g = random_group_element::<f64, _>(3, &mut rng);
        assert!(check_second_jacobi(&g, 2, 3).unwrap().abs() < 1e-10);
        assert!(check_second_jacobi(&g, 1, 3).is_err());
    }

    #[test]
    fn exact_jacobi_on_random_unipotent_products() {
        for idx in 0..20 {
            let mut rng = sample_rng(7, idx);
            let g = random_group_element::<Rational, _>(4, &mut rng);
            for j in 1..=4 {
                assert!(check_first_jacobi(&g, j).unwrap().is_zero());
            }
            for i in 1..4 {
                assert!(check_second_jacobi(&g, i, i + 1).unwrap().is_zero());
                assert!(check_second_jacobi(&g, i + 1, i).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn factorization_constants() {
        let c: Rational = highest_weight_factorization(&HighestElement(2), 3, &[0, 1, 0]).unwrap();
        assert_eq!(c, q(1, 1));
        let c: Rational = highest_weight_factorization(&FirstJacobiDet(2), 3, &[1, 0, 1]).unwrap();
        assert_eq!(c, q(1, 1));
        let wrong = highest_weight_factorization::<Rational, _>(&FirstJacobiDet(2), 3, &[1, 1, 1]);
        assert!(matches!(wrong, Err(Error::NotHighest(_))));
        struct NotHighest;
        impl GroupFunction for NotHighest {
            fn eval<S: Scalar>(&self, g: &Matrix<S>) -> Result<S> {
                Ok(g[(1, 0)].clone())
            }
        }
        assert!(highest_weight_factorization::<Rational, _>(&NotHighest, 2, &[0, 0]).is_err());
    }

    #[test]
    fn generalized_minors_on_red_basis() {
        let rep = build_fundamental_rep(2, 1).unwrap();
        let basis = red_basis(&rep, &Site { m: 1, r: 1 }, BasisKind::First).unwrap();
        for idx in 0..10 {
            let g = random_group_element::<f64, _>(2, &mut sample_rng(9, idx));
            for s in 1..=2 {
                let (m, p) = generalized_jacobi_minor(&g, &rep, &basis, s).unwrap();
                assert!((m - p).abs() < 1e-10 * p.abs().max(1.0));
            }
            let (m, _) = generalized_jacobi_minor(&g, &rep, &basis, 1).unwrap();
            assert!((m - g.hv(1)).abs() < 1e-14);
        }
        let reversed: Vec<Vec<i64>> = basis.iter().rev().cloned().collect();
        let g = GroupElement::<f64>::identity(2);
        assert!(matches!(
            generalized_jacobi_minor(&g, &rep, &reversed, 2),
            Err(Error::InvalidBasis(_))
        ));
    }

    #[test]
    fn minors_annihilated_by_shifts() {
        let rep = build_fundamental_rep(4, 2).unwrap();
        let basis = red_basis(&rep, &Site { m: 2, r: 2 }, BasisKind::First).unwrap();
        let g = random_unipotent::<Rational, _>(4, 1.0, &mut sample_rng(1, 2));
        for s in 1..=3 {
            let f = PrincipalMinor {
                j: 2,
                basis: basis[..s].to_vec(),
            };
            assert!(annihilated_by_shifts(&f, &g, 4, 0.0).unwrap());
            let gf = g.to_f64();
            for i in 1..=4 {
                let d = shift_derivative_fd(
                    &f,
                    &gf,
                    RegularShift {
                        side: Side::Left,
                        generator: Generator::XMinus(i),
                    },
                    4,
                    1e-4,
                )
                .unwrap();
                assert!(d.abs() < 1e-6);
            }
        }
    }
}
