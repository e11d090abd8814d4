//! Bordered determinants of a site's `u` matrix and their closed forms in
//! highest-vector matrix elements, plus the nested raising/lowering ratio
//! recursions relating the border vectors.

use serde::Serialize;

use crate::cartan::{Lattice, Site};
use crate::error::{Error, Result};
use crate::identities::{check_first_jacobi, lowered, GroupElement};
use crate::matrix::Matrix;
use crate::rep::{red_basis_wedges, BasisKind};
use crate::scalar::Scalar;
use crate::wedge::{matrix_element, principal, Wedge};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderedIdentity {
    /// Border `(E_{b+1,m}, E_{b+1,m})`.
    CartanBorder,
    /// Border `(E_{m+1,m-1}, E_{m+1,m-1})`.
    CrossBorder,
    /// Border `(E_{b+1,m}, E_{b+1,m-1})`.
    SingleLowering,
    /// Border `(E_{m+1,m-1}, E_{b+1,m-1})`.
    DoubleLowering,
    /// Border `(E_{b+1,m-1}, E_{b+1,m-1})`.
    RaiseLower,
}

impl BorderedIdentity {
    pub const ALL: [BorderedIdentity; 5] = [
        BorderedIdentity::CartanBorder,
        BorderedIdentity::CrossBorder,
        BorderedIdentity::SingleLowering,
        BorderedIdentity::DoubleLowering,
        BorderedIdentity::RaiseLower,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BorderedIdentity::CartanBorder => "bordered_cartan",
            BorderedIdentity::CrossBorder => "bordered_cross",
            BorderedIdentity::SingleLowering => "bordered_single_lowering",
            BorderedIdentity::DoubleLowering => "bordered_double_lowering",
            BorderedIdentity::RaiseLower => "bordered_raise_lower",
        }
    }

    fn borders(&self) -> (usize, usize) {
        match self {
            BorderedIdentity::CartanBorder => (1, 1),
            BorderedIdentity::CrossBorder => (2, 2),
            BorderedIdentity::SingleLowering => (1, 3),
            BorderedIdentity::DoubleLowering => (2, 3),
            BorderedIdentity::RaiseLower => (3, 3),
        }
    }

    pub fn applies(&self, site: &Site, n: usize) -> bool {
        let base = site.m >= 2 && site.b() <= n;
        match self {
            BorderedIdentity::CartanBorder | BorderedIdentity::SingleLowering => base,
            _ => base && site.r >= 1,
        }
    }
}

fn border_vector<T: Scalar>(site: &Site, which: usize) -> Wedge<T> {
    let (m, b) = (site.m, site.b());
    let hw = Wedge::highest(m);
    match which {
        1 => hw.apply_unit(b + 1, m),
        2 => hw.apply_unit(m + 1, m - 1),
        _ => hw.apply_unit(b + 1, m - 1),
    }
}

/// Determinant of `u_m` bordered by one extra bra and one extra ket.
pub fn bordered_det<T: Scalar>(k: &Matrix<T>, site: &Site, id: BorderedIdentity) -> T {
    let (a, c) = id.borders();
    let mut rows = red_basis_wedges::<T>(site, BasisKind::First);
    let mut cols = rows.clone();
    rows.push(border_vector(site, a));
    cols.push(border_vector(site, c));
    let s = rows.len();
    Matrix::from_fn(s, s, |r, q| matrix_element(k, &rows[r], &cols[q])).det()
}

/// Products of highest-vector elements whose combination gives the
/// bordered determinant.
pub fn closed_form_terms<T: Scalar>(k: &Matrix<T>, site: &Site, id: BorderedIdentity) -> Vec<T> {
    let (m, b, r) = (site.m, site.b(), site.r as i64);
    let br = |j: usize| principal(k, j);
    let low = |j: usize| {
        let hw = Wedge::<T>::highest(j);
        matrix_element(k, &hw, &hw.apply_unit(j + 1, j))
    };
    let raise = |j: usize| {
        let hw = Wedge::<T>::highest(j);
        matrix_element(k, &hw.apply_unit(j + 1, j), &hw)
    };
    let far = || Wedge::<T>::highest(m + 1).apply_unit(b + 1, m + 1);
    match id {
        BorderedIdentity::CartanBorder => vec![br(m - 1).powi(r + 1) * br(b + 1)],
        BorderedIdentity::CrossBorder => {
            vec![br(b) * br(m - 1).powi(r - 1) * br(m - 2) * br(m + 1)]
        }
        BorderedIdentity::SingleLowering => vec![br(b + 1) * br(m - 1).powi(r) * low(m - 1)],
        BorderedIdentity::DoubleLowering => {
            vec![
                br(m - 1).powi(r - 1)
                    * br(m - 2)
                    * br(b)
                    * matrix_element(k, &Wedge::highest(m + 1), &far()),
            ]
        }
        BorderedIdentity::RaiseLower => vec![
            br(m - 1).powi(r - 1) * br(b + 1) * raise(m - 1) * low(m - 1),
            br(m - 1).powi(r - 1) * br(m - 2) * br(b) * matrix_element(k, &far(), &far()),
        ],
    }
}

fn unit_exp<T: Scalar>(d: usize, a: usize, b: usize) -> Option<Matrix<T>> {
    (a >= 1 && b >= 1 && a <= d && b <= d && a != b)
        .then(|| &Matrix::identity(d) + &Matrix::unit(d, a - 1, b - 1))
}

/// Elements used to fix the constants: the identity and exponentials of
/// the unit matrices transposed to the border shifts.
pub fn calibration_elements<T: Scalar>(site: &Site, n: usize) -> Vec<Matrix<T>> {
    let d = n + 1;
    let (m, b) = (site.m, site.b());
    let pairs = [
        (m - 1, m),
        (m, m - 1),
        (m + 1, b + 1),
        (b + 1, m + 1),
        (m - 1, b + 1),
        (b + 1, m - 1),
    ];
    let singles: Vec<Matrix<T>> = pairs
        .iter()
        .filter_map(|&(a, c)| unit_exp(d, a, c))
        .collect();
    let mut out = vec![Matrix::identity(d)];
    out.extend(singles.iter().cloned());
    for (x, y) in [
        ((m, m - 1), (m - 1, m)),
        ((b + 1, m + 1), (m + 1, b + 1)),
        ((b + 1, m - 1), (m - 1, b + 1)),
    ] {
        if let (Some(p), Some(q)) = (unit_exp::<T>(d, x.0, x.1), unit_exp::<T>(d, y.0, y.1)) {
            out.push(p.matmul(&q));
        }
    }
    out
}

/// Least-squares constants (exact over rationals) from the calibration set.
pub fn calibrate<T: Scalar>(site: &Site, n: usize, id: BorderedIdentity) -> Result<Vec<T>> {
    if !id.applies(site, n) {
        return Err(Error::Dimension(format!(
            "{} does not apply to site m={} r={}",
            id.name(),
            site.m,
            site.r
        )));
    }
    let ks = calibration_elements::<T>(site, n);
    let rows: Vec<Vec<T>> = ks.iter().map(|k| closed_form_terms(k, site, id)).collect();
    let rhs: Vec<T> = ks.iter().map(|k| bordered_det(k, site, id)).collect();
    let p = rows[0].len();
    let a = Matrix::from_fn(rows.len(), p, |i, j| rows[i][j].clone());
    let at = a.transpose();
    let normal = at.matmul(&a);
    let b = at.matmul(&Matrix::from_fn(rhs.len(), 1, |i, _| rhs[i].clone()));
    let sol = normal.solve(&b).ok_or_else(|| {
        Error::Construction(format!("calibration of {} is degenerate", id.name()))
    })?;
    Ok((0..p).map(|i| sol[(i, 0)].clone()).collect())
}

fn rel(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Relative residual of a bordered identity with given constants.
pub fn bordered_residual<T: Scalar>(
    k: &Matrix<T>,
    site: &Site,
    id: BorderedIdentity,
    consts: &[T],
) -> f64 {
    let lhs = bordered_det(k, site, id);
    let terms = closed_form_terms(k, site, id);
    let scale = terms
        .iter()
        .zip(consts)
        .map(|(t, c)| (t.clone() * c.clone()).magnitude())
        .sum::<f64>()
        .max(lhs.magnitude());
    let rhs = terms
        .into_iter()
        .zip(consts)
        .fold(T::zero(), |acc, (t, c)| acc + t * c.clone());
    let diff = lhs - rhs;
    if T::EXACT && diff.is_zero() {
        return 0.0;
    }
    rel(diff.magnitude(), scale)
}

/// `det u_m = <m-1>^R <b>` (first kind) and `det u_mbar = <b>^R <m-1>`.
pub fn determinant_formula_residual<T: Scalar>(k: &Matrix<T>, site: &Site) -> f64 {
    let r = site.r as i64;
    let (lo, hi) = (principal(k, site.m - 1), principal(k, site.b()));
    let pairs = [
        (
            crate::flow::u_matrix(k, site, BasisKind::First).det(),
            lo.powi(r) * hi.clone(),
        ),
        (
            crate::flow::u_matrix(k, site, BasisKind::Last).det(),
            hi.powi(r) * lo,
        ),
    ];
    pairs
        .into_iter()
        .map(|(a, b)| {
            let scale = a.magnitude().max(b.magnitude());
            let d = a - b;
            if T::EXACT && d.is_zero() {
                0.0
            } else {
                rel(d.magnitude(), scale)
            }
        })
        .fold(0.0, f64::max)
}

/// `<i1|X^+_{i1} .. X^+_{ip} K|i1> / <i1>`.
pub fn raising_ratio<T: Scalar>(k: &Matrix<T>, seq: &[usize]) -> T {
    let Some(&j) = seq.first() else {
        return T::one();
    };
    matrix_element(k, &lowered::<T>(j, seq), &Wedge::highest(j)) / principal(k, j)
}

/// `<j|K X^-_{s_1} .. X^-_{s_p}|j> / <j>` with `j = s_p`.
pub fn lowering_ratio<T: Scalar>(k: &Matrix<T>, seq: &[usize]) -> T {
    let Some(&j) = seq.last() else {
        return T::one();
    };
    let rev: Vec<usize> = seq.iter().rev().copied().collect();
    matrix_element(k, &Wedge::highest(j), &lowered::<T>(j, &rev)) / principal(k, j)
}

fn ascending(a: usize, c: usize) -> Vec<usize> {
    (a..=c).collect()
}

fn descending(c: usize, a: usize) -> Vec<usize> {
    (a..=c).rev().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecursionResiduals {
    pub k: usize,
    pub raising: f64,
    pub lowering: f64,
    pub sum: f64,
    pub border_element: f64,
}

fn abs_rel<T: Scalar>(a: T, b: T) -> f64 {
    let scale = a.magnitude().max(b.magnitude()).max(1.0);
    let d = a - b;
    if T::EXACT && d.is_zero() {
        0.0
    } else {
        d.magnitude() / scale
    }
}

/// Ratio recursion of order `k` at root `m` for both chains, the weighted
/// sum identity and the doubly shifted element `<m|E_{m,c+1} K E_{c+1,m}|m>`
/// with `c = m + k`.
pub fn recursion_residuals<T: Scalar>(
    k: &Matrix<T>,
    m: usize,
    order: usize,
) -> Result<RecursionResiduals> {
    let n = k.rows() - 1;
    let c = m + order;
    if m == 0 || order == 0 || c > n {
        return Err(Error::Dimension(format!(
            "recursion of order {order} at root {m} in A_{n}"
        )));
    }
    let sign = |e: usize| {
        if e.is_multiple_of(2) {
            T::one()
        } else {
            -T::one()
        }
    };
    let asc = |a: usize, c: usize| raising_ratio(k, &ascending(a, c));
    let desc = |c: usize, a: usize| raising_ratio(k, &descending(c, a));
    let mut rhs = sign(order) * desc(c, m);
    for s in 1..=order {
        rhs = rhs + sign(s + 1) * asc(m + s, c) * desc(m + s - 1, m);
    }
    let raising = abs_rel(asc(m, c), rhs);

    let aasc = |a: usize, c: usize| lowering_ratio(k, &descending(c, a));
    let adesc = |c: usize, a: usize| lowering_ratio(k, &ascending(a, c));
    let mut rhs = sign(order) * adesc(c, m);
    for s in 1..=order {
        rhs = rhs + sign(s + 1) * aasc(m + s, c) * adesc(m + s - 1, m);
    }
    let lowering = abs_rel(aasc(m, c), rhs);

    let br = |j: usize| principal(k, j);
    let mut lhs = T::zero();
    for s in 0..=order {
        lhs = lhs
            + br(m + s) / br(m + s - 1)
                * raising_ratio(k, &ascending(m + s, c))
                * lowering_ratio(k, &descending(c, m + s));
    }
    let site = Site { m, r: order };
    let sv = red_basis_wedges::<T>(&site, BasisKind::First);
    let u = Matrix::from_fn(sv.len(), sv.len(), |a, b| matrix_element(k, &sv[a], &sv[b]));
    let hc = Wedge::<T>::highest(c);
    let (ab, al): (Vec<T>, Vec<T>) = (1..=order + 1)
        .map(|s| {
            (
                matrix_element(k, &hc.apply_unit(c + 1, m + s - 1), &hc) / br(c),
                matrix_element(k, &hc, &hc.apply_unit(c + 1, m + s - 1)) / br(c),
            )
        })
        .unzip();
    let quad = u.bilinear(&ab, &al);
    let sum = abs_rel(lhs, quad.clone() / br(m - 1));
    let hm = Wedge::<T>::highest(m);
    let be_lhs = matrix_element(k, &hm.apply_unit(c + 1, m), &hm.apply_unit(c + 1, m));
    let border_element = abs_rel(be_lhs, quad + br(m - 1) * br(c + 1) / br(c));
    Ok(RecursionResiduals {
        k: order,
        raising,
        lowering,
        sum,
        border_element,
    })
}

/// One identity evaluated at one site.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteCheck {
    pub identity: String,
    pub site: usize,
    pub residual: f64,
}

/// All bordered identities at all applicable sites, the determinant
/// formulas, the first Jacobi identity at black roots and the border
/// element identity. `consts` holds calibrated constants per site/identity.
pub fn intermediate_determinants<T: Scalar>(
    k: &Matrix<T>,
    lattice: &Lattice,
    consts: &Calibrations<T>,
) -> Result<Vec<SiteCheck>> {
    let n = lattice.n;
    let mut out = Vec::new();
    for (i, site) in lattice.sites.iter().enumerate() {
        out.push(SiteCheck {
            identity: "determinant_formula".into(),
            site: i + 1,
            residual: determinant_formula_residual(k, site),
        });
        for id in BorderedIdentity::ALL {
            if let Some(c) = consts.get(i, id) {
                out.push(SiteCheck {
                    identity: id.name().into(),
                    site: i + 1,
                    residual: bordered_residual(k, site, id, c),
                });
            }
        }
        if site.m >= 2 && site.b() <= n {
            let g = GroupElement::from_matrix(n, k.clone())?;
            let j = site.m - 1;
            let scale = principal(k, j - 1).magnitude() * principal(k, j + 1).magnitude()
                / principal(k, j).magnitude().powi(2);
            let res = check_first_jacobi(&g, j)?;
            let residual = if T::EXACT && res.is_zero() {
                0.0
            } else {
                rel(res.magnitude(), scale)
            };
            out.push(SiteCheck {
                identity: "black_root_jacobi".into(),
                site: i + 1,
                residual,
            });
            let rr = recursion_residuals(k, site.m, site.r.max(1).min(n - site.m))
                .map(|r| r.border_element)
                .unwrap_or(0.0);
            if site.r >= 1 {
                out.push(SiteCheck {
                    identity: "border_element".into(),
                    site: i + 1,
                    residual: rr,
                });
            }
        }
    }
    Ok(out)
}

/// Calibrated constants for every applicable (site, identity).
#[derive(Clone, Debug, PartialEq)]
pub struct Calibrations<T> {
    entries: Vec<(usize, BorderedIdentity, Vec<T>)>,
}

impl<T: Scalar> Calibrations<T> {
    pub fn new(lattice: &Lattice) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, site) in lattice.sites.iter().enumerate() {
            for id in BorderedIdentity::ALL {
                if id.applies(site, lattice.n) {
                    entries.push((i, id, calibrate(site, lattice.n, id)?));
                }
            }
        }
        Ok(Calibrations { entries })
    }

    pub fn get(&self, site: usize, id: BorderedIdentity) -> Option<&[T]> {
        self.entries
            .iter()
            .find(|e| e.0 == site && e.1 == id)
            .map(|e| e.2.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, BorderedIdentity, &[T])> {
        self.entries.iter().map(|e| (e.0, e.1, e.2.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::GradingVector;
    use crate::identities::{random_unipotent, sample_rng};
    use crate::scalar::Rational;

    fn q(a: i64) -> Rational {
        Rational::from_i64(a)
    }

    #[test]
    fn calibrated_constants() {
        let cases = [
            (Site { m: 3, r: 2 }, 7),
            (Site { m: 3, r: 1 }, 4),
            (Site { m: 2, r: 3 }, 6),
            (Site { m: 4, r: 0 }, 5),
        ];
        for (site, n) in cases {
            for id in BorderedIdentity::ALL {
                if !id.applies(&site, n) {
                    continue;
                }
                let c: Vec<Rational> = calibrate(&site, n, id).unwrap();
                let want = match id {
                    BorderedIdentity::SingleLowering => vec![q(-1)],
                    BorderedIdentity::RaiseLower => vec![q(1), q(1)],
                    _ => vec![q(1)],
                };
                assert_eq!(c, want, "{id:?} at {site:?}");
            }
        }
    }

    #[test]
    fn bordered_identities_hold_exactly_on_random_elements() {
        for (site, n, seed) in [
            (Site { m: 3, r: 2 }, 6, 1),
            (Site { m: 2, r: 1 }, 4, 2),
            (Site { m: 4, r: 0 }, 5, 3),
        ] {
            for s in 0..3 {
                let k: Matrix<Rational> = random_unipotent(n, 1.0, &mut sample_rng(seed, s));
                for id in BorderedIdentity::ALL {
                    if id.applies(&site, n) {
                        let c = calibrate(&site, n, id).unwrap();
                        assert_eq!(bordered_residual(&k, &site, id, &c), 0.0, "{id:?}");
                    }
                }
                assert_eq!(determinant_formula_residual(&k, &site), 0.0);
            }
        }
    }

    #[test]
    fn identity_element_matches_constants() {
        let site = Site { m: 3, r: 1 };
        let k = Matrix::<Rational>::identity(5);
        for id in BorderedIdentity::ALL {
            let c = calibrate(&site, 4, id).unwrap();
            assert_eq!(bordered_residual(&k, &site, id, &c), 0.0);
        }
        assert_eq!(
            bordered_det(&k, &site, BorderedIdentity::CartanBorder),
            q(1)
        );
    }

    #[test]
    fn recursions_hold() {
        for s in 0..3 {
            let k: Matrix<Rational> = random_unipotent(7, 1.0, &mut sample_rng(11, s));
            for order in 1..=4 {
                let r = recursion_residuals(&k, 2, order).unwrap();
                assert_eq!(
                    (r.raising, r.lowering, r.sum, r.border_element),
                    (0.0, 0.0, 0.0, 0.0),
                    "order {order}"
                );
            }
            let kf = k.to_f64();
            let r = recursion_residuals(&kf, 2, 4).unwrap();
            assert!(r.raising.max(r.lowering).max(r.sum).max(r.border_element) < 1e-10);
        }
    }

    #[test]
    fn first_order_recursion_is_second_jacobi() {
        let k: Matrix<f64> = random_unipotent(4, 1.0, &mut sample_rng(1, 1));
        let lhs = raising_ratio(&k, &[2, 3]);
        let rhs = -raising_ratio(&k, &[3, 2]) + raising_ratio(&k, &[3]) * raising_ratio(&k, &[2]);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn site_checks_on_a4() {
        let l = Lattice::new(&"0,1,0,1".parse::<GradingVector>().unwrap());
        let cal = Calibrations::<f64>::new(&l).unwrap();
        assert_eq!(cal.iter().count(), 5);
        for s in 0..5 {
            let k: Matrix<f64> = random_unipotent(4, 1.0, &mut sample_rng(8, s));
            let checks = intermediate_determinants(&k, &l, &cal).unwrap();
            assert!(checks.iter().all(|c| c.residual < 1e-9), "{checks:?}");
            assert!(checks.iter().any(|c| c.identity == "border_element"));
        }
    }
}
