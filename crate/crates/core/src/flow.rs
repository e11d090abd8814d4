//! Linear flows `M^+_y = (B^0 + L^+) M^+`, `M^-_x = M^- (A^0 + L^-)` and the
//! composite element `K = M^+ M^-`.

use std::collections::BTreeMap;

use num_traits::Zero;
use rayon::prelude::*;

use crate::cartan::{cartan_matrix, grading_coefficients, Lattice, Site};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::poly::Poly;
use crate::rep::{
    composite_root_generator, lowering_chain, nested_bracket, red_basis_wedges, BasisKind,
    CompositeRoot, FundamentalRep, Sign,
};
use crate::scalar::{Rational, Scalar};
use crate::wedge::{matrix_element, principal, Wedge};

/// Coefficient functions of the flows. Site indices are 0-based; `P^{k,i}`
/// couples site `i` to site `i + k`.
#[derive(Clone, Debug)]
pub struct CoefficientSpec<T> {
    pub lattice: Lattice,
    /// Largest grade `M` present in `L^±`.
    pub m: usize,
    /// Coefficients of `h_1..h_n` in `A^0(x)`.
    pub a0: Vec<Poly<T>>,
    /// Coefficients of `h_1..h_n` in `B^0(y)`.
    pub b0: Vec<Poly<T>>,
    /// `P^{k,i}(x)`, shape `(R_{i+k}+1) x (R_i+1)`.
    pub p: BTreeMap<(usize, usize), Matrix<Poly<T>>>,
    /// `Pbar^{k,i}(y)`, shape `(R_i+1) x (R_{i+k}+1)`.
    pub pbar: BTreeMap<(usize, usize), Matrix<Poly<T>>>,
}

impl<T: Scalar> PartialEq for CoefficientSpec<T> {
    fn eq(&self, o: &Self) -> bool {
        self.lattice == o.lattice
            && self.m == o.m
            && self.a0 == o.a0
            && self.b0 == o.b0
            && self.p == o.p
            && self.pbar == o.pbar
    }
}

impl<T: Scalar> CoefficientSpec<T> {
    pub fn zero(lattice: Lattice, m: usize) -> Self {
        let n = lattice.n;
        CoefficientSpec {
            lattice,
            m,
            a0: vec![Poly::zero(); n],
            b0: vec![Poly::zero(); n],
            p: BTreeMap::new(),
            pbar: BTreeMap::new(),
        }
    }

    /// Unit coefficients at grade 1 (rectangular identities), zero above.
    pub fn identity(lattice: Lattice, m: usize) -> Self {
        let mut spec = CoefficientSpec::zero(lattice, m);
        for i in 0..spec.lattice.len().saturating_sub(1) {
            let (di, dk) = (spec.lattice.site(i).dim(), spec.lattice.site(i + 1).dim());
            spec.p.insert((1, i), Matrix::eye(dk, di));
            spec.pbar.insert((1, i), Matrix::eye(di, dk));
        }
        spec
    }

    pub fn n(&self) -> usize {
        self.lattice.n
    }

    pub fn has_zero_grade(&self) -> bool {
        self.a0.iter().chain(&self.b0).any(|p| !p.is_zero())
    }

    pub fn validate(&self, degree_cap: usize) -> Result<()> {
        let s = self.lattice.len();
        if self.m == 0 {
            return Err(Error::Config("M must be at least 1".into()));
        }
        if self.a0.len() != self.n() || self.b0.len() != self.n() {
            return Err(Error::Config(format!(
                "A0/B0 need {} Cartan coefficients",
                self.n()
            )));
        }
        for (name, map, transpose) in [("P", &self.p, true), ("Pbar", &self.pbar, false)] {
            for (&(k, i), mat) in map {
                if k == 0 || k > self.m {
                    return Err(Error::Config(format!(
                        "{name}^{{{k},{}}}: grade outside 1..{}",
                        i + 1,
                        self.m
                    )));
                }
                if i + k >= s {
                    return Err(Error::Config(format!(
                        "{name}^{{{k},{}}}: site {} does not exist",
                        i + 1,
                        i + k + 1
                    )));
                }
                let (di, dk) = (self.lattice.site(i).dim(), self.lattice.site(i + k).dim());
                let want = if transpose { (dk, di) } else { (di, dk) };
                if mat.shape() != want {
                    return Err(Error::Config(format!(
                        "{name}^{{{k},{}}} has shape {:?}, expected {:?}",
                        i + 1,
                        mat.shape(),
                        want
                    )));
                }
                if mat.max_degree() > degree_cap {
                    return Err(Error::Config(format!(
                        "{name}^{{{k},{}}} exceeds degree cap {degree_cap}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn p_at(&self, k: usize, i: usize, x: &T) -> Option<Matrix<T>> {
        self.p.get(&(k, i)).map(|m| m.eval(x))
    }

    pub fn pbar_at(&self, k: usize, i: usize, y: &T) -> Option<Matrix<T>> {
        self.pbar.get(&(k, i)).map(|m| m.eval(y))
    }

    /// Converts the coefficient type.
    pub fn convert<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> CoefficientSpec<U> {
        let cp = |p: &Poly<T>| Poly::new(p.coeffs().iter().map(f).collect());
        let cm = |m: &Matrix<Poly<T>>| Matrix::from_fn(m.rows(), m.cols(), |a, b| cp(&m[(a, b)]));
        CoefficientSpec {
            lattice: self.lattice.clone(),
            m: self.m,
            a0: self.a0.iter().map(cp).collect(),
            b0: self.b0.iter().map(cp).collect(),
            p: self.p.iter().map(|(k, v)| (*k, cm(v))).collect(),
            pbar: self.pbar.iter().map(|(k, v)| (*k, cm(v))).collect(),
        }
    }

    /// `L^+(y)` in the defining representation.
    pub fn l_plus(&self, y: &T) -> Matrix<T> {
        let d = self.lattice.dim();
        let mut out = Matrix::zeros(d, d);
        for (&(k, i), m) in &self.pbar {
            let (si, sk) = (self.lattice.site(i), self.lattice.site(i + k));
            out.set_block(si.m - 1, sk.m - 1, &m.eval(y));
        }
        out
    }

    /// `L^-(x)` in the defining representation.
    pub fn l_minus(&self, x: &T) -> Matrix<T> {
        let d = self.lattice.dim();
        let mut out = Matrix::zeros(d, d);
        for (&(k, i), m) in &self.p {
            let (si, sk) = (self.lattice.site(i), self.lattice.site(i + k));
            out.set_block(sk.m - 1, si.m - 1, &m.eval(x));
        }
        out
    }

    fn cartan_part(&self, coeffs: &[Poly<T>], t: &T) -> Matrix<T> {
        let d = self.lattice.dim();
        let mut out = Matrix::<T>::zeros(d, d);
        for (i, c) in coeffs.iter().enumerate() {
            let v = c.eval(t);
            out[(i, i)] = out[(i, i)].clone() + v.clone();
            out[(i + 1, i + 1)] = out[(i + 1, i + 1)].clone() - v;
        }
        out
    }

    /// `A^0(x) + L^-(x)`.
    pub fn minus_generator(&self, x: &T) -> Matrix<T> {
        &self.cartan_part(&self.a0, x) + &self.l_minus(x)
    }

    /// `B^0(y) + L^+(y)`.
    pub fn plus_generator(&self, y: &T) -> Matrix<T> {
        &self.cartan_part(&self.b0, y) + &self.l_plus(y)
    }
}

/// Generator of the composite root joining `row` of site `i` to `col` of
/// site `i + k` (0-based positions), as the nested commutator of the red
/// tail of site `i`, the black chain and the red head of site `i + k`.
pub fn graded_generator(
    rep: &FundamentalRep,
    lattice: &Lattice,
    k: usize,
    i: usize,
    row: usize,
    col: usize,
) -> Result<Matrix<i64>> {
    let (si, sk) = (lattice.site(i), lattice.site(i + k));
    let prev = lattice.site(i + k - 1);
    let roots = [
        CompositeRoot::plus(si.m + row, si.mbar()),
        CompositeRoot::plus(si.b(), prev.b()),
        CompositeRoot::plus(sk.m, sk.m + col - 1),
    ];
    let parts: Vec<Matrix<i64>> = roots
        .iter()
        .map(|r| composite_root_generator(rep, *r))
        .collect::<Result<_>>()?;
    let flags: Vec<bool> = roots.iter().map(CompositeRoot::is_identity).collect();
    Ok(nested_bracket(&parts, &flags))
}

/// `L^{±}` evaluated at `t` in representation `rep`, assembled from
/// composite-root generators. Every generator is checked to have grade
/// `±k` under the grading operator.
pub fn assemble_l<T: Scalar>(
    spec: &CoefficientSpec<T>,
    rep: &FundamentalRep,
    sign: Sign,
    t: &T,
) -> Result<Matrix<T>> {
    let lattice = &spec.lattice;
    let cd = cartan_matrix(lattice.n)?;
    let w = grading_coefficients(&cd, &lattice.grading)?;
    let dim = rep.dim();
    let mut hop = Matrix::<Rational>::zeros(dim, dim);
    for (i, wi) in w.iter().enumerate() {
        hop = &hop + &Matrix::<Rational>::from_i64(rep.h(i + 1)).scale(wi);
    }
    let coeffs = match sign {
        Sign::Plus => &spec.pbar,
        Sign::Minus => &spec.p,
    };
    let mut out = Matrix::<T>::zeros(dim, dim);
    for (&(k, i), m) in coeffs {
        let vals = m.eval(t);
        let (di, dk) = (lattice.site(i).dim(), lattice.site(i + k).dim());
        for a in 0..di {
            for b in 0..dk {
                let mut g = graded_generator(rep, lattice, k, i, a, b)?;
                let coef = match sign {
                    Sign::Plus => vals[(a, b)].clone(),
                    Sign::Minus => {
                        g = g.transpose();
                        vals[(b, a)].clone()
                    }
                };
                let gq = Matrix::<Rational>::from_i64(&g);
                let grade = Rational::from_i64(if sign == Sign::Plus {
                    k as i64
                } else {
                    -(k as i64)
                });
                if hop.commutator(&gq) != gq.scale(&grade) || g.is_zero() {
                    return Err(Error::Construction(format!(
                        "generator ({k},{i},{a},{b}) is not of grade {grade}"
                    )));
                }
                out = &out + &Matrix::<T>::from_i64(&g).scale(&coef);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub h: f64,
}

impl GridSpec {
    pub fn unit(h: f64) -> Self {
        GridSpec {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
            h,
        }
    }

    fn steps(a: f64, b: f64, h: f64) -> Result<usize> {
        let s = (b - a) / h;
        let r = s.round();
        if !(h > 0.0) || r < 1.0 || (s - r).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::Config(format!(
                "interval [{a},{b}] is not a multiple of h={h}"
            )));
        }
        Ok(r as usize)
    }

    /// Number of cells along x and y.
    pub fn cells(&self) -> Result<(usize, usize)> {
        Ok((
            Self::steps(self.x0, self.x1, self.h)?,
            Self::steps(self.y0, self.y1, self.h)?,
        ))
    }

    pub fn x<T: Scalar>(&self, p: usize) -> T {
        T::from_f64(self.x0) + T::from_i64(p as i64) * T::from_f64(self.h)
    }

    pub fn y<T: Scalar>(&self, q: usize) -> T {
        T::from_f64(self.y0) + T::from_i64(q as i64) * T::from_f64(self.h)
    }

    pub fn refined(&self, level: u32) -> Self {
        GridSpec {
            h: self.h / f64::from(1u32 << level),
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
}

/// Samples of `M^+` on the lines `y = y_q` and of `M^-` on `x = x_p`.
#[derive(Clone, Debug)]
pub struct Flows<T> {
    pub grid: GridSpec,
    pub mplus: Vec<Matrix<T>>,
    pub mminus: Vec<Matrix<T>>,
}

fn rk4_step<T: Scalar>(
    m: &Matrix<T>,
    t: &T,
    dt: &T,
    left: bool,
    f: &dyn Fn(&T) -> Matrix<T>,
) -> Matrix<T> {
    let half = dt.clone() / T::from_i64(2);
    let rhs = |t: &T, m: &Matrix<T>| {
        if left {
            f(t).matmul(m)
        } else {
            m.matmul(&f(t))
        }
    };
    let k1 = rhs(t, m);
    let k2 = rhs(&(t.clone() + half.clone()), &(m + &k1.scale(&half)));
    let k3 = rhs(&(t.clone() + half.clone()), &(m + &k2.scale(&half)));
    let k4 = rhs(&(t.clone() + dt.clone()), &(m + &k3.scale(dt)));
    let sum = &(&k1 + &k2.scale(&T::from_i64(2))) + &(&k3.scale(&T::from_i64(2)) + &k4);
    m + &sum.scale(&(dt.clone() / T::from_i64(6)))
}

fn integrate_line<T: Scalar>(
    steps: usize,
    t0: T,
    h: T,
    left: bool,
    f: &dyn Fn(&T) -> Matrix<T>,
    d: usize,
) -> Vec<Matrix<T>> {
    let sub = T::from_i64(4);
    let dt = h / sub;
    let mut m = Matrix::identity(d);
    let mut t = t0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(m.clone());
    for _ in 0..steps {
        for _ in 0..4 {
            m = rk4_step(&m, &t, &dt, left, f);
            t = t + dt.clone();
        }
        out.push(m.clone());
    }
    out
}

/// Polynomial solutions of the flows by terminating Picard iteration.
/// Requires vanishing zero-grade parts so that both generators are nilpotent.
pub fn exact_flows<T: Scalar>(
    spec: &CoefficientSpec<T>,
    x0: &T,
    y0: &T,
) -> Result<(Matrix<Poly<T>>, Matrix<Poly<T>>)> {
    if spec.has_zero_grade() {
        return Err(Error::UnsupportedExact(
            "zero-grade flow terms A0/B0".into(),
        ));
    }
    let d = spec.lattice.dim();
    let lift = |m: &BTreeMap<(usize, usize), Matrix<Poly<T>>>, upper: bool| {
        let mut out = Matrix::<Poly<T>>::zeros(d, d);
        for (&(k, i), block) in m {
            let (si, sk) = (spec.lattice.site(i), spec.lattice.site(i + k));
            if upper {
                out.set_block(si.m - 1, sk.m - 1, block);
            } else {
                out.set_block(sk.m - 1, si.m - 1, block);
            }
        }
        out
    };
    let lp = lift(&spec.pbar, true);
    let lm = lift(&spec.p, false);
    let picard = |gen: &Matrix<Poly<T>>, left: bool, t0: &T| -> Result<Matrix<Poly<T>>> {
        let id = Matrix::<Poly<T>>::identity(d);
        let mut m = id.clone();
        for _ in 0..=spec.lattice.len() + 1 {
            let integrand = if left { gen.matmul(&m) } else { m.matmul(gen) };
            let next = &id + &integrand.integral_from(t0);
            if next == m {
                return Ok(m);
            }
            m = next;
        }
        Err(Error::Construction(
            "Picard iteration did not terminate".into(),
        ))
    };
    Ok((picard(&lp, true, y0)?, picard(&lm, false, x0)?))
}

pub fn solve_flows<T: Scalar>(
    spec: &CoefficientSpec<T>,
    grid: &GridSpec,
    mode: Mode,
) -> Result<Flows<T>> {
    let (nx, ny) = grid.cells()?;
    let d = spec.lattice.dim();
    let (x0, y0): (T, T) = (grid.x(0), grid.y(0));
    let (mplus, mminus) = match mode {
        Mode::Exact => {
            let (pp, pm) = exact_flows(spec, &x0, &y0)?;
            (
                (0..=ny).map(|q| pp.eval(&grid.y(q))).collect(),
                (0..=nx).map(|p| pm.eval(&grid.x(p))).collect(),
            )
        }
        Mode::Float => {
            let h = T::from_f64(grid.h);
            let fp = |y: &T| spec.plus_generator(y);
            let fm = |x: &T| spec.minus_generator(x);
            let (mp, mm) = rayon::join(
                || integrate_line(ny, y0.clone(), h.clone(), true, &fp, d),
                || integrate_line(nx, x0.clone(), h.clone(), false, &fm, d),
            );
            (mp, mm)
        }
    };
    Ok(Flows {
        grid: *grid,
        mplus,
        mminus,
    })
}

pub fn compose_k<T: Scalar>(mplus: &Matrix<T>, mminus: &Matrix<T>) -> Result<Matrix<T>> {
    if mplus.shape() != mminus.shape() || !mplus.is_square() {
        return Err(Error::Dimension(format!(
            "factors of shape {:?} and {:?}",
            mplus.shape(),
            mminus.shape()
        )));
    }
    Ok(mplus.matmul(mminus))
}

/// `K = M^+ M^-` at every grid node, indexed `[p][q]` with `p` along x.
#[derive(Clone, Debug)]
pub struct KGrid<T> {
    pub grid: GridSpec,
    pub nx: usize,
    pub ny: usize,
    values: Vec<Matrix<T>>,
}

impl<T: Scalar> KGrid<T> {
    pub fn from_flows(flows: &Flows<T>) -> Result<Self> {
        let (nx, ny) = flows.grid.cells()?;
        let values: Vec<Matrix<T>> = (0..(nx + 1) * (ny + 1))
            .into_par_iter()
            .map(|idx| compose_k(&flows.mplus[idx % (ny + 1)], &flows.mminus[idx / (ny + 1)]))
            .collect::<Result<_>>()?;
        Ok(KGrid {
            grid: flows.grid,
            nx,
            ny,
            values,
        })
    }

    pub fn at(&self, p: usize, q: usize) -> &Matrix<T> {
        &self.values[p * (self.ny + 1) + q]
    }
}

/// `u` matrix of a site over its `First` or `Last` basis.
pub fn u_matrix<T: Scalar>(k: &Matrix<T>, site: &Site, kind: BasisKind) -> Matrix<T> {
    let basis = red_basis_wedges::<T>(site, kind);
    let s = basis.len();
    Matrix::from_fn(s, s, |a, b| matrix_element(k, &basis[a], &basis[b]))
}

/// Representation index carrying the SV basis of the given kind.
pub fn basis_rep(site: &Site, kind: BasisKind) -> usize {
    lowering_chain(site, kind).0
}

/// Right side of the mixed log-derivative formula for `<i|K|i>`:
/// the 2x2 determinant of shifted matrix elements over `<i|K|i>^2`.
pub fn mixed_log_rhs<T: Scalar>(
    k: &Matrix<T>,
    lp: &Matrix<T>,
    lm: &Matrix<T>,
    i: usize,
) -> Result<T> {
    let hw = Wedge::<T>::highest(i);
    let ket = hw.apply(lm);
    let bra = hw.apply(&lp.transpose());
    let kk = principal(k, i);
    if kk.is_zero() {
        return Err(Error::Singular(format!("<{i}|K|{i}> vanishes")));
    }
    let det = kk.clone() * matrix_element(k, &bra, &ket)
        - matrix_element(k, &hw, &ket) * matrix_element(k, &bra, &hw);
    Ok(det / (kk.clone() * kk))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedLogReport {
    pub max_residual: f64,
    pub mean_residual: f64,
    pub points: usize,
    pub skipped: usize,
}

/// Central mixed difference of `ln <i|K|i>` against the algebraic formula,
/// over all interior grid nodes.
pub fn mixed_log_derivative_check<T: Scalar>(
    kg: &KGrid<T>,
    spec: &CoefficientSpec<T>,
    i: usize,
) -> Result<MixedLogReport> {
    if i == 0 || i > spec.n() || spec.lattice.grading.get(i) != 1 {
        return Err(Error::Dimension(format!("root {i} is not black")));
    }
    let h = kg.grid.h;
    let ln = |p: usize, q: usize| -> Option<f64> {
        let v = principal(kg.at(p, q), i).to_f64();
        (v > 0.0).then(|| v.ln())
    };
    let results: Vec<Option<f64>> = (1..kg.nx)
        .into_par_iter()
        .flat_map_iter(|p| (1..kg.ny).map(move |q| (p, q)))
        .map(|(p, q)| -> Result<Option<f64>> {
            let vals = [
                ln(p + 1, q + 1),
                ln(p + 1, q - 1),
                ln(p - 1, q + 1),
                ln(p - 1, q - 1),
            ];
            if vals.iter().any(Option::is_none) || ln(p, q).is_none() {
                return Ok(None);
            }
            let v: Vec<f64> = vals.iter().map(|x| x.unwrap_or(0.0)).collect();
            let fd = (v[0] - v[1] - v[2] + v[3]) / (4.0 * h * h);
            let x: T = kg.grid.x(p);
            let y: T = kg.grid.y(q);
            let rhs = mixed_log_rhs(kg.at(p, q), &spec.l_plus(&y), &spec.l_minus(&x), i)?.to_f64();
            Ok(Some((fd - rhs).abs()))
        })
        .collect::<Result<_>>()?;
    let used: Vec<f64> = results.iter().flatten().copied().collect();
    let skipped = results.len() - used.len();
    let max_residual = used.iter().copied().fold(0.0, f64::max);
    let mean_residual = if used.is_empty() {
        0.0
    } else {
        used.iter().sum::<f64>() / used.len() as f64
    };
    Ok(MixedLogReport {
        max_residual,
        mean_residual,
        points: used.len(),
        skipped,
    })
}

/// Determinant of the identity-normalized flows; 1 for unipotent factors.
pub fn det_one<T: Scalar>(m: &Matrix<T>) -> bool {
    let d = m.det();
    if T::EXACT {
        d.is_one()
    } else {
        (d - T::one()).magnitude() < 1e-10
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::GradingVector;
    use crate::rep::fundamental_rep;

    fn lattice(c: &str) -> Lattice {
        Lattice::new(&c.parse::<GradingVector>().unwrap())
    }

    fn q(a: i64, b: i64) -> Rational {
        Rational::from_ratio(a, b)
    }

    fn poly_spec() -> CoefficientSpec<Rational> {
        let mut spec = CoefficientSpec::<Rational>::zero(lattice("0,1,0,1"), 2);
        let pq = |c: &[(i64, i64)]| Poly::new(c.iter().map(|&(a, b)| q(a, b)).collect());
        spec.pbar.insert(
            (1, 0),
            Matrix::from_fn(2, 2, |a, b| {
                pq(&[((a + 2 * b) as i64 - 1, 3), (1, 2 + a as i64)])
            }),
        );
        spec.pbar.insert(
            (1, 1),
            Matrix::from_fn(2, 1, |a, _| pq(&[(1, 1), (a as i64, 4)])),
        );
        spec.pbar.insert(
            (2, 0),
            Matrix::from_fn(2, 1, |a, _| pq(&[(a as i64 - 1, 2)])),
        );
        spec.p.insert(
            (1, 0),
            Matrix::from_fn(2, 2, |a, b| pq(&[(1 + (a * b) as i64, 2), (-1, 3)])),
        );
        spec.p.insert(
            (1, 1),
            Matrix::from_fn(1, 2, |_, b| pq(&[(2, 3), (0, 1), (b as i64, 5)])),
        );
        spec.p.insert(
            (2, 0),
            Matrix::from_fn(1, 2, |_, b| pq(&[(b as i64 + 1, 4)])),
        );
        spec.validate(6).unwrap();
        spec
    }

    #[test]
    fn zero_spec_gives_zero_generators_and_identity_flows() {
        let spec = CoefficientSpec::<f64>::zero(lattice("0,1,0"), 1);
        let rep = fundamental_rep(3, 2).unwrap();
        assert!(assemble_l(&spec, &rep, Sign::Plus, &0.3).unwrap().is_zero());
        let flows = solve_flows(&spec, &GridSpec::unit(0.25), Mode::Float).unwrap();
        assert!(flows
            .mplus
            .iter()
            .chain(&flows.mminus)
            .all(|m| *m == Matrix::identity(4)));
    }

    #[test]
    fn assembled_generators_match_defining_blocks() {
        let spec = poly_spec();
        let rep1 = fundamental_rep(4, 1).unwrap();
        let y = q(2, 7);
        assert_eq!(
            assemble_l(&spec, &rep1, Sign::Plus, &y).unwrap(),
            spec.l_plus(&y)
        );
        assert_eq!(
            assemble_l(&spec, &rep1, Sign::Minus, &y).unwrap(),
            spec.l_minus(&y)
        );
        for j in 2..=4 {
            let rep = fundamental_rep(4, j).unwrap();
            let lifted = crate::wedge::lift(&spec.l_plus(&y), j);
            assert_eq!(assemble_l(&spec, &rep, Sign::Plus, &y).unwrap(), lifted);
        }
    }

    #[test]
    fn main_grading_generators_are_simple_roots() {
        let l = lattice("1,1,1");
        let mut spec = CoefficientSpec::<Rational>::identity(l, 1);
        for (i, m) in spec.pbar.iter_mut() {
            *m = m.scale(&Poly::constant(q(i.1 as i64 + 2, 1)));
        }
        let rep = fundamental_rep(3, 1).unwrap();
        let lp = assemble_l(&spec, &rep, Sign::Plus, &q(0, 1)).unwrap();
        let want = (1..=3).fold(Matrix::zeros(4, 4), |acc: Matrix<Rational>, i| {
            &acc + &Matrix::from_i64(rep.xp(i)).scale(&q(i as i64 + 1, 1))
        });
        assert_eq!(lp, want);
    }

    #[test]
    fn adjacent_trivial_sites_use_single_root() {
        let l = lattice("1,1");
        let spec = CoefficientSpec::<Rational>::identity(l.clone(), 1);
        let rep = fundamental_rep(2, 1).unwrap();
        let g = graded_generator(&rep, &l, 1, 0, 0, 0).unwrap();
        assert_eq!(g, *rep.xp(1));
        assert!(spec.validate(6).is_ok());
    }

    #[test]
    fn exact_flow_of_a1() {
        let spec = CoefficientSpec::<Rational>::identity(lattice("1"), 1);
        let (_, mm) = exact_flows(&spec, &q(0, 1), &q(0, 1)).unwrap();
        let x = q(3, 5);
        let want = Matrix::from_rows(vec![vec![q(1, 1), q(0, 1)], vec![x.clone(), q(1, 1)]]);
        assert_eq!(mm.eval(&x), want);
    }

    #[test]
    fn exact_mode_rejects_zero_grade_terms() {
        let mut spec = CoefficientSpec::<Rational>::identity(lattice("1,1"), 1);
        spec.a0[0] = Poly::constant(q(1, 1));
        assert!(matches!(
            solve_flows(&spec, &GridSpec::unit(0.5), Mode::Exact),
            Err(Error::UnsupportedExact(_))
        ));
    }

    #[test]
    fn numeric_and_exact_modes_agree() {
        let spec = poly_spec();
        let grid = GridSpec::unit(0.05);
        let exact = solve_flows(&spec, &grid, Mode::Exact).unwrap();
        let fspec = spec.convert(|v| v.to_f64());
        let float = solve_flows(&fspec, &grid, Mode::Float).unwrap();
        for (a, b) in exact
            .mplus
            .iter()
            .zip(&float.mplus)
            .chain(exact.mminus.iter().zip(&float.mminus))
        {
            assert!(a.to_f64().max_abs_diff(b) < 1e-10);
        }
        let kg = KGrid::from_flows(&exact).unwrap();
        assert!(det_one(kg.at(7, 13)));
        assert_eq!(*kg.at(0, 0), Matrix::identity(5));
    }

    #[test]
    fn refinement_changes_k_negligibly() {
        let spec = poly_spec().convert(|v| v.to_f64());
        let coarse =
            KGrid::from_flows(&solve_flows(&spec, &GridSpec::unit(0.1), Mode::Float).unwrap())
                .unwrap();
        let fine =
            KGrid::from_flows(&solve_flows(&spec, &GridSpec::unit(0.05), Mode::Float).unwrap())
                .unwrap();
        let a = coarse.at(10, 10);
        assert!(a.max_abs_diff(fine.at(20, 20)) < 1e-10 * a.max_abs());
    }

    #[test]
    fn flow_generator_recovered_by_differences() {
        let mut spec = poly_spec().convert(|v| v.to_f64());
        spec.a0[1] = Poly::new(vec![0.3, -0.2]);
        let grid = GridSpec::unit(0.01);
        let flows = solve_flows(&spec, &grid, Mode::Float).unwrap();
        let mut errs = Vec::new();
        for h in [0.01, 0.005] {
            let g = GridSpec::unit(h);
            let f = solve_flows(&spec, &g, Mode::Float).unwrap();
            let p = (0.5 / h).round() as usize;
            let dm = (&f.mminus[p + 1] - &f.mminus[p - 1]).scale(&(0.5 / h));
            let gen = f.mminus[p].inverse().unwrap().matmul(&dm);
            errs.push(gen.max_abs_diff(&spec.minus_generator(&0.5)));
        }
        assert!(flows.mminus.len() == 101);
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn u_matrix_determinants() {
        let spec = poly_spec();
        let (pp, pm) = exact_flows(&spec, &q(0, 1), &q(0, 1)).unwrap();
        let k = compose_k(&pp.eval(&q(1, 3)), &pm.eval(&q(2, 5))).unwrap();
        for site in &spec.lattice.sites {
            let r = site.r as i64;
            let u1 = u_matrix(&k, site, BasisKind::First);
            assert_eq!(
                u1.det(),
                principal(&k, site.m - 1).powi(r) * principal(&k, site.b())
            );
            let u2 = u_matrix(&k, site, BasisKind::Last);
            if site.r > 0 {
                assert_eq!(
                    u2.det(),
                    principal(&k, site.b()).powi(r) * principal(&k, site.m - 1)
                );
            }
            assert_eq!(
                u_matrix(&Matrix::<Rational>::identity(5), site, BasisKind::First),
                Matrix::identity(site.dim())
            );
        }
    }

    #[test]
    fn mixed_log_derivative_converges() {
        let spec = CoefficientSpec::<f64>::identity(lattice("1"), 1);
        let mut res = Vec::new();
        for h in [0.02, 0.01] {
            let kg =
                KGrid::from_flows(&solve_flows(&spec, &GridSpec::unit(h), Mode::Float).unwrap())
                    .unwrap();
            res.push(
                mixed_log_derivative_check(&kg, &spec, 1)
                    .unwrap()
                    .max_residual,
            );
        }
        let ratio = res[0] / res[1];
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        let zero = CoefficientSpec::<f64>::zero(lattice("1,1"), 1);
        let kg = KGrid::from_flows(&solve_flows(&zero, &GridSpec::unit(0.1), Mode::Float).unwrap())
            .unwrap();
        assert_eq!(
            mixed_log_derivative_check(&kg, &zero, 2)
                .unwrap()
                .max_residual,
            0.0
        );
    }

    #[test]
    fn mixed_log_derivative_random_a2() {
        let mut spec = CoefficientSpec::<f64>::zero(lattice("1,1"), 2);
        spec.pbar.insert(
            (1, 0),
            Matrix::from_rows(vec![vec![Poly::new(vec![0.4, -0.3, 0.2])]]),
        );
        spec.pbar.insert(
            (1, 1),
            Matrix::from_rows(vec![vec![Poly::new(vec![-0.7, 0.5])]]),
        );
        spec.pbar.insert(
            (2, 0),
            Matrix::from_rows(vec![vec![Poly::new(vec![0.1, 0.0, 0.3])]]),
        );
        spec.p.insert(
            (1, 0),
            Matrix::from_rows(vec![vec![Poly::new(vec![0.9, 0.1])]]),
        );
        spec.p.insert(
            (1, 1),
            Matrix::from_rows(vec![vec![Poly::new(vec![-0.2, 0.6, -0.1])]]),
        );
        spec.p
            .insert((2, 0), Matrix::from_rows(vec![vec![Poly::new(vec![0.5])]]));
        spec.validate(6).unwrap();
        let grid = GridSpec {
            x0: 0.0,
            x1: 0.02,
            y0: 0.0,
            y1: 0.02,
            h: 1e-3,
        };
        let kg = KGrid::from_flows(&solve_flows(&spec, &grid, Mode::Float).unwrap()).unwrap();
        for i in 1..=2 {
            assert!(
                mixed_log_derivative_check(&kg, &spec, i)
                    .unwrap()
                    .max_residual
                    < 1e-6
            );
        }
    }
}
