//! Toda fields `y_i`, `z_i` extracted from `K`, the correction matrices of
//! its block Gauss factorization, dressed coefficients and the
//! finite-difference residuals of the equations of motion.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::cartan::Lattice;
use crate::error::{Error, Result};
use crate::flow::{u_matrix, CoefficientSpec, Flows, GridSpec, KGrid};
use crate::matrix::Matrix;
use crate::rep::BasisKind;
use crate::scalar::Scalar;
use crate::wedge::{matrix_element, principal, Wedge};

pub type BlockMap<T> = BTreeMap<(usize, usize), Matrix<T>>;

/// `y_i`, `z_i` and the black-root elements `<b_0> .. <b_S>` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointFields<T> {
    pub y: Vec<Matrix<T>>,
    pub z: Vec<Matrix<T>>,
    pub brackets: Vec<T>,
}

/// Black roots bounding the sites, with the virtual ends `0` and `n + 1`.
pub fn black_roots(lattice: &Lattice) -> Vec<usize> {
    let mut out: Vec<usize> = lattice.sites.iter().map(|s| s.prev_black()).collect();
    out.push(lattice.n + 1);
    out
}

pub fn fields_at<T: Scalar>(k: &Matrix<T>, lattice: &Lattice) -> Result<PointFields<T>> {
    let brackets: Vec<T> = black_roots(lattice)
        .iter()
        .map(|&b| principal(k, b))
        .collect();
    if let Some(pos) = brackets.iter().position(ZeroLike::is_zero_like) {
        return Err(Error::Singular(format!(
            "<{}> vanishes",
            black_roots(lattice)[pos]
        )));
    }
    let mut y = Vec::with_capacity(lattice.len());
    let mut z = Vec::with_capacity(lattice.len());
    for (i, site) in lattice.sites.iter().enumerate() {
        let u1 = u_matrix(k, site, BasisKind::First);
        let u2 = u_matrix(k, site, BasisKind::Last);
        y.push(u1.scale(&(T::one() / brackets[i].clone())));
        z.push(u2.scale(&(T::one() / brackets[i + 1].clone())));
    }
    Ok(PointFields { y, z, brackets })
}

trait ZeroLike {
    fn is_zero_like(&self) -> bool;
}

impl<T: Scalar> ZeroLike for T {
    fn is_zero_like(&self) -> bool {
        if T::EXACT {
            self.is_zero()
        } else {
            self.magnitude() < 1e-300
        }
    }
}

/// Fields on every node of a grid, indexed `[p][q]` with `p` along x.
#[derive(Clone, Debug)]
pub struct SolutionField<T> {
    pub grid: GridSpec,
    pub nx: usize,
    pub ny: usize,
    pub lattice: Lattice,
    points: Vec<PointFields<T>>,
}

impl<T: Scalar> SolutionField<T> {
    pub fn at(&self, p: usize, q: usize) -> &PointFields<T> {
        &self.points[p * (self.ny + 1) + q]
    }

    pub fn sites(&self) -> usize {
        self.lattice.len()
    }
}

fn locate(e: Error, grid: &GridSpec, p: usize, q: usize) -> Error {
    match e {
        Error::Singular(msg) => Error::Singular(format!(
            "{msg} at (x, y) = ({}, {})",
            grid.x::<f64>(p),
            grid.y::<f64>(q)
        )),
        other => other,
    }
}

pub fn build_solution_field<T: Scalar>(
    kg: &KGrid<T>,
    lattice: &Lattice,
) -> Result<SolutionField<T>> {
    let ny = kg.ny;
    let points = (0..(kg.nx + 1) * (ny + 1))
        .into_par_iter()
        .map(|idx| {
            let (p, q) = (idx / (ny + 1), idx % (ny + 1));
            fields_at(kg.at(p, q), lattice).map_err(|e| locate(e, &kg.grid, p, q))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SolutionField {
        grid: kg.grid,
        nx: kg.nx,
        ny,
        lattice: lattice.clone(),
        points,
    })
}

/// Antidiagonal `±1` matrix relating `y^{-1}` and `z^T`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AntidiagonalSign {
    pub signs: Vec<i64>,
}

impl AntidiagonalSign {
    pub fn matrix<T: Scalar>(&self) -> Matrix<T> {
        let d = self.signs.len();
        Matrix::from_fn(d, d, |a, b| {
            if a + b + 1 == d {
                T::from_i64(self.signs[a])
            } else {
                T::zero()
            }
        })
    }

    pub fn alternates(&self) -> bool {
        self.signs.windows(2).all(|w| w[0] == -w[1])
    }

    fn all(d: usize) -> impl Iterator<Item = AntidiagonalSign> {
        (0u32..1 << d.saturating_sub(1)).map(move |mask| AntidiagonalSign {
            signs: (0..d)
                .map(|a| {
                    if a > 0 && mask >> (a - 1) & 1 == 1 {
                        -1
                    } else {
                        1
                    }
                })
                .collect(),
        })
    }
}

fn relative_residual(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.max_abs_diff(b) / a.max_abs().max(1.0)
}

/// Residual of `y^{-1} = t z^T t^{-1}`, relative to `max(1, |y^{-1}|)`.
pub fn inverse_relation_residual<T: Scalar>(
    y: &Matrix<T>,
    z: &Matrix<T>,
    t: &AntidiagonalSign,
) -> Result<f64> {
    let yinv = y
        .inverse()
        .ok_or_else(|| Error::Singular("y is not invertible".into()))?;
    let tm = t.matrix::<T>();
    let rhs = tm.matmul(&z.transpose()).matmul(&tm.transpose());
    if T::EXACT {
        return Ok(if yinv == rhs {
            0.0
        } else {
            relative_residual(&yinv.to_f64(), &rhs.to_f64()).max(f64::MIN_POSITIVE)
        });
    }
    Ok(relative_residual(&yinv.to_f64(), &rhs.to_f64()))
}

/// Picks, per site, the sign pattern minimizing the residual at `fields`.
pub fn determine_signs<T: Scalar>(
    fields: &PointFields<T>,
    tol: f64,
) -> Result<Vec<AntidiagonalSign>> {
    fields
        .y
        .iter()
        .zip(&fields.z)
        .enumerate()
        .map(|(i, (y, z))| {
            let mut best: Option<(f64, AntidiagonalSign)> = None;
            for t in AntidiagonalSign::all(y.rows()) {
                let r = inverse_relation_residual(y, z, &t)?;
                if best.as_ref().is_none_or(|(b, _)| r < *b) {
                    best = Some((r, t));
                }
            }
            match best {
                Some((r, t)) if r <= tol => Ok(t),
                Some((r, _)) => Err(Error::Convention(format!(
                    "site {}: best sign pattern leaves residual {r:e}",
                    i + 1
                ))),
                None => Err(Error::Convention(format!("site {}: empty block", i + 1))),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InverseRelationReport {
    pub signs: Vec<AntidiagonalSign>,
    pub max_residual: f64,
    pub max_det_defect: f64,
    pub points: usize,
}

/// Freezes the sign patterns at the node farthest from the corner, then
/// evaluates the relation and `det y det z = 1` on every node.
pub fn check_inverse_relation<T: Scalar>(
    field: &SolutionField<T>,
    tol: f64,
) -> Result<InverseRelationReport> {
    let signs = determine_signs(field.at(field.nx, field.ny), tol)?;
    let per_point: Vec<(f64, f64)> = field
        .points
        .par_iter()
        .map(|pf| -> Result<(f64, f64)> {
            let mut worst = (0.0f64, 0.0f64);
            for (i, (y, z)) in pf.y.iter().zip(&pf.z).enumerate() {
                worst.0 = worst.0.max(inverse_relation_residual(y, z, &signs[i])?);
                let d = y.det() * z.det() - T::one();
                worst.1 = worst.1.max(d.magnitude());
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let max_residual = per_point.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_det_defect = per_point.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(InverseRelationReport {
        signs,
        max_residual,
        max_det_defect,
        points: per_point.len(),
    })
}

/// Correction matrices at one point. Keys are `(i, j)` with `j < i` for
/// `abar`/`bbar` (row side) and `(j, i)` for `a`/`b` (column side).
#[derive(Clone, Debug, PartialEq)]
pub struct Corrections<T> {
    pub abar: BlockMap<T>,
    pub bbar: BlockMap<T>,
    pub a: BlockMap<T>,
    pub b: BlockMap<T>,
}

fn defining_indices(lattice: &Lattice, i: usize) -> Vec<usize> {
    let s = lattice.site(i);
    (s.m..=s.b()).filter(|&v| v <= lattice.n + 1).collect()
}

/// Ratios of highest-vector matrix elements shifted by `E_{col,row}` on
/// the left (row side) or right (column side) of `K`.
pub fn correction_matrices<T: Scalar>(k: &Matrix<T>, lattice: &Lattice) -> Result<Corrections<T>> {
    let beta = black_roots(lattice);
    let mut out = Corrections {
        abar: BTreeMap::new(),
        bbar: BTreeMap::new(),
        a: BTreeMap::new(),
        b: BTreeMap::new(),
    };
    for i in 1..lattice.len() {
        let gi = defining_indices(lattice, i);
        for j in 0..i {
            let gj = defining_indices(lattice, j);
            for (rep, row_map, col_map) in [(beta[i], 0, 0), (beta[j + 1], 1, 1)] {
                let hw = Wedge::<T>::highest(rep);
                let den = principal(k, rep);
                if den.is_zero_like() {
                    return Err(Error::Singular(format!("<{rep}> vanishes")));
                }
                let inv = T::one() / den;
                let left = Matrix::from_fn(gi.len(), gj.len(), |a, b| {
                    matrix_element(k, &hw.apply_unit(gi[a], gj[b]), &hw) * inv.clone()
                });
                let right = Matrix::from_fn(gj.len(), gi.len(), |p, q| {
                    matrix_element(k, &hw, &hw.apply_unit(gi[q], gj[p])) * inv.clone()
                });
                if row_map == 0 {
                    out.abar.insert((i, j), left);
                } else {
                    out.bbar.insert((i, j), left);
                }
                if col_map == 0 {
                    out.a.insert((j, i), right);
                } else {
                    out.b.insert((j, i), right);
                }
            }
        }
    }
    Ok(out)
}

/// Dressed coefficients `pi^{k,i}` (x side) and `pibar^{k,i}` (y side).
#[derive(Clone, Debug, PartialEq)]
pub struct Dressed<T> {
    pub pi: BlockMap<T>,
    pub pibar: BlockMap<T>,
}

pub fn dressed_pi<T: Scalar>(
    spec: &CoefficientSpec<T>,
    corr: &Corrections<T>,
    x: &T,
    y: &T,
) -> Result<Dressed<T>> {
    let s_len = spec.lattice.len();
    let dim = |i: usize| spec.lattice.site(i).dim();
    let mut pi = BTreeMap::new();
    let mut pibar = BTreeMap::new();
    let get = |m: &BlockMap<T>, key: (usize, usize)| {
        m.get(&key)
            .cloned()
            .ok_or_else(|| Error::Dimension(format!("missing correction block {key:?}")))
    };
    for k in 1..=spec.m {
        for i in 0..s_len.saturating_sub(k) {
            let mut acc_bar = Matrix::<T>::zeros(dim(i), dim(i + k));
            let mut acc = Matrix::<T>::zeros(dim(i + k), dim(i));
            for s in k..=spec.m {
                for t in 0..=(s - k) {
                    if t > i || i - t + s >= s_len {
                        continue;
                    }
                    let (src, tgt) = (i - t, i - t + s);
                    if let Some(pb) = spec.pbar_at(s, src, y) {
                        let mut term = pb;
                        if t > 0 {
                            term = -&get(&corr.abar, (i, src))?.matmul(&term);
                        }
                        if tgt > i + k {
                            term = term.matmul(&get(&corr.bbar, (tgt, i + k))?);
                        }
                        if term.shape() != acc_bar.shape() {
                            return Err(Error::Dimension(format!(
                                "dressing term for pibar^{{{k},{}}}",
                                i + 1
                            )));
                        }
                        acc_bar = &acc_bar + &term;
                    }
                    if let Some(p) = spec.p_at(s, src, x) {
                        let mut term = p;
                        if t > 0 {
                            term = -&term.matmul(&get(&corr.a, (src, i))?);
                        }
                        if tgt > i + k {
                            term = get(&corr.b, (i + k, tgt))?.matmul(&term);
                        }
                        if term.shape() != acc.shape() {
                            return Err(Error::Dimension(format!(
                                "dressing term for pi^{{{k},{}}}",
                                i + 1
                            )));
                        }
                        acc = &acc + &term;
                    }
                }
            }
            pibar.insert((k, i), acc_bar);
            pi.insert((k, i), acc);
        }
    }
    Ok(Dressed { pi, pibar })
}

/// Everything the equations of motion need at one grid node.
#[derive(Clone, Debug)]
pub struct PointData<T> {
    pub fields: PointFields<T>,
    pub yinv: Vec<Matrix<T>>,
    pub dressed: Dressed<T>,
    /// `Abar^{i+1,i}` for consecutive sites.
    pub abar_next: Vec<Matrix<T>>,
    /// `A^{i,i+1}` for consecutive sites.
    pub a_next: Vec<Matrix<T>>,
}

pub fn point_data<T: Scalar>(
    k: &Matrix<T>,
    spec: &CoefficientSpec<T>,
    x: &T,
    y: &T,
) -> Result<PointData<T>> {
    let fields = fields_at(k, &spec.lattice)?;
    let yinv = fields
        .y
        .iter()
        .enumerate()
        .map(|(i, y)| {
            y.inverse()
                .ok_or_else(|| Error::Singular(format!("y_{} is not invertible", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let corr = correction_matrices(k, &spec.lattice)?;
    let dressed = dressed_pi(spec, &corr, x, y)?;
    let s = spec.lattice.len();
    let abar_next = (0..s.saturating_sub(1))
        .map(|i| corr.abar[&(i + 1, i)].clone())
        .collect();
    let a_next = (0..s.saturating_sub(1))
        .map(|i| corr.a[&(i, i + 1)].clone())
        .collect();
    Ok(PointData {
        fields,
        yinv,
        dressed,
        abar_next,
        a_next,
    })
}

/// Right side of the Toda equation for `(y_i^{-1} y_{i,x})_y`.
pub fn toda_rhs<T: Scalar>(d: &PointData<T>, m: usize, i: usize) -> Matrix<T> {
    let y = &d.fields.y;
    let mut acc = Matrix::zeros(y[i].rows(), y[i].cols());
    for r in 1..=m {
        if let (Some(pb), Some(p)) = (d.dressed.pibar.get(&(r, i)), d.dressed.pi.get(&(r, i))) {
            acc = &acc + &d.yinv[i].matmul(pb).matmul(&y[i + r]).matmul(p);
        }
        if r <= i {
            if let (Some(p), Some(pb)) = (
                d.dressed.pi.get(&(r, i - r)),
                d.dressed.pibar.get(&(r, i - r)),
            ) {
                acc = &acc - &p.matmul(&d.yinv[i - r]).matmul(pb).matmul(&y[i]);
            }
        }
    }
    acc
}

/// Right side of the x-flow of `pibar^{r,i}`.
pub fn pibar_flow_rhs<T: Scalar>(
    d: &PointData<T>,
    m: usize,
    r: usize,
    i: usize,
) -> Option<Matrix<T>> {
    let (pb, pi, y, yinv) = (&d.dressed.pibar, &d.dressed.pi, &d.fields.y, &d.yinv);
    let mut acc = pb.get(&(r, i))?.map(|_| T::zero());
    for q in 1..=m.saturating_sub(r) {
        if let (Some(a), Some(b)) = (pb.get(&(q + r, i)), pi.get(&(q, i + r))) {
            acc = &acc + &a.matmul(&y[i + q + r]).matmul(b).matmul(&yinv[i + r]);
        }
        if q <= i {
            if let (Some(a), Some(b)) = (pi.get(&(q, i - q)), pb.get(&(q + r, i - q))) {
                acc = &acc - &y[i].matmul(a).matmul(&yinv[i - q]).matmul(b);
            }
        }
    }
    Some(acc)
}

/// Right side of the y-flow of `pi^{r,i}`.
pub fn pi_flow_rhs<T: Scalar>(d: &PointData<T>, m: usize, r: usize, i: usize) -> Option<Matrix<T>> {
    let (pb, pi, y, yinv) = (&d.dressed.pibar, &d.dressed.pi, &d.fields.y, &d.yinv);
    let mut acc = pi.get(&(r, i))?.map(|_| T::zero());
    for q in 1..=m.saturating_sub(r) {
        if let (Some(a), Some(b)) = (pb.get(&(q, i + r)), pi.get(&(q + r, i))) {
            acc = &acc + &yinv[i + r].matmul(a).matmul(&y[i + q + r]).matmul(b);
        }
        if q <= i {
            if let (Some(a), Some(b)) = (pi.get(&(q + r, i - q)), pb.get(&(q, i - q))) {
                acc = &acc - &a.matmul(&yinv[i - q]).matmul(b).matmul(&y[i]);
            }
        }
    }
    Some(acc)
}

/// Equations checked by the residual study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    Toda,
    PibarFlow,
    PiFlow,
    AbarFlow,
    AFlow,
}

impl Equation {
    pub const ALL: [Equation; 5] = [
        Equation::Toda,
        Equation::PibarFlow,
        Equation::PiFlow,
        Equation::AbarFlow,
        Equation::AFlow,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Equation::Toda => "toda_equation",
            Equation::PibarFlow => "pibar_x_flow",
            Equation::PiFlow => "pi_y_flow",
            Equation::AbarFlow => "abar_x_flow",
            Equation::AFlow => "a_y_flow",
        }
    }
}

/// Max-entry residual of each equation on a 3x3 stencil `st[dx+1][dy+1]`
/// of spacing `h`, all sites included.
pub fn stencil_residuals(
    st: &[[PointData<f64>; 3]; 3],
    m: usize,
    h: f64,
) -> BTreeMap<Equation, f64> {
    let c = &st[1][1];
    let s = c.fields.y.len();
    let mut out: BTreeMap<Equation, f64> = BTreeMap::new();
    let mut bump = |e: Equation, v: f64| {
        let slot = out.entry(e).or_insert(0.0);
        *slot = slot.max(v);
    };
    let dx = |f: &dyn Fn(&PointData<f64>) -> Matrix<f64>, row: usize| {
        (&f(&st[2][row]) - &f(&st[0][row])).scale(&(0.5 / h))
    };
    let dy = |f: &dyn Fn(&PointData<f64>) -> Matrix<f64>| {
        (&f(&st[1][2]) - &f(&st[1][0])).scale(&(0.5 / h))
    };
    for i in 0..s {
        let g = |row: usize| {
            st[1][row].yinv[i].matmul(&dx(&|d: &PointData<f64>| d.fields.y[i].clone(), row))
        };
        let lhs = (&g(2) - &g(0)).scale(&(0.5 / h));
        bump(Equation::Toda, lhs.max_abs_diff(&toda_rhs(c, m, i)));
        for r in 1..=m {
            if let Some(rhs) = pibar_flow_rhs(c, m, r, i) {
                let lhs = dx(&|d: &PointData<f64>| d.dressed.pibar[&(r, i)].clone(), 1);
                bump(Equation::PibarFlow, lhs.max_abs_diff(&rhs));
            }
            if let Some(rhs) = pi_flow_rhs(c, m, r, i) {
                let lhs = dy(&|d: &PointData<f64>| d.dressed.pi[&(r, i)].clone());
                bump(Equation::PiFlow, lhs.max_abs_diff(&rhs));
            }
        }
        if i + 1 < s {
            let y = &c.fields.y;
            let lhs = dx(&|d: &PointData<f64>| d.abar_next[i].clone(), 1);
            let rhs = y[i + 1].matmul(&c.dressed.pi[&(1, i)]).matmul(&c.yinv[i]);
            bump(Equation::AbarFlow, lhs.max_abs_diff(&rhs));
            let lhs = dy(&|d: &PointData<f64>| d.a_next[i].clone());
            let rhs = c.yinv[i]
                .matmul(&c.dressed.pibar[&(1, i)])
                .matmul(&y[i + 1]);
            bump(Equation::AFlow, lhs.max_abs_diff(&rhs));
        }
    }
    out
}

/// Probe nodes of the coarsest grid where residuals are compared across
/// refinement levels: interior nodes with the given stride.
pub fn probe_nodes(coarse: &GridSpec, stride: usize) -> Result<Vec<(usize, usize)>> {
    let (nx, ny) = coarse.cells()?;
    let stride = stride.max(1);
    let xs: Vec<usize> = (1..nx).step_by(stride).collect();
    let ys: Vec<usize> = (1..ny).step_by(stride).collect();
    Ok(xs
        .iter()
        .flat_map(|&p| ys.iter().map(move |&q| (p, q)))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
}

/// Residual statistics of every equation at refinement `level` of
/// `coarse`, evaluated at the coarse probe nodes.
pub fn equation_residuals(
    spec: &CoefficientSpec<f64>,
    flows: &Flows<f64>,
    coarse: &GridSpec,
    level: u32,
    probes: &[(usize, usize)],
) -> Result<BTreeMap<Equation, ResidualStats>> {
    let f = 1usize << level;
    let grid = flows.grid;
    let per_probe: Vec<BTreeMap<Equation, f64>> = probes
        .par_iter()
        .map(|&(p0, q0)| -> Result<BTreeMap<Equation, f64>> {
            let (pc, qc) = (p0 * f, q0 * f);
            let node = |p: usize, q: usize| -> Result<PointData<f64>> {
                let k = flows.mplus[q].matmul(&flows.mminus[p]);
                point_data(&k, spec, &grid.x(p), &grid.y(q)).map_err(|e| locate(e, &grid, p, q))
            };
            let row = |p: usize| -> Result<[PointData<f64>; 3]> {
                Ok([node(p, qc - 1)?, node(p, qc)?, node(p, qc + 1)?])
            };
            let st = [row(pc - 1)?, row(pc)?, row(pc + 1)?];
            Ok(stencil_residuals(&st, spec.m, grid.h))
        })
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for e in Equation::ALL {
        let vals: Vec<f64> = per_probe
            .iter()
            .filter_map(|m| m.get(&e).copied())
            .collect();
        if vals.is_empty() {
            continue;
        }
        let max = vals.iter().copied().fold(0.0, f64::max);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        out.insert(e, ResidualStats { max, mean });
    }
    let _ = coarse;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::GradingVector;
    use crate::flow::{solve_flows, Mode};
    use crate::identities::{random_unipotent, sample_rng};
    use crate::poly::Poly;
    use crate::scalar::Rational;

    fn lattice(c: &str) -> Lattice {
        Lattice::new(&c.parse::<GradingVector>().unwrap())
    }

    /// Block Gauss factorization `K = L D U` by site blocks.
    fn block_ldu(k: &Matrix<f64>, l: &Lattice) -> (Matrix<f64>, Matrix<f64>, Matrix<f64>) {
        let d = k.rows();
        let mut lm = Matrix::identity(d);
        let mut w = k.clone();
        for (s, site) in l.sites.iter().enumerate() {
            let g: Vec<usize> = site.range().collect();
            let post: Vec<usize> = l.sites[s + 1..].iter().flat_map(|t| t.range()).collect();
            if post.is_empty() {
                continue;
            }
            let piv = w.submatrix(&g, &g).inverse().unwrap();
            let all: Vec<usize> = (0..d).collect();
            let f = w.submatrix(&post, &g).matmul(&piv);
            let upd = f.matmul(&w.submatrix(&g, &all));
            for (a, &r) in post.iter().enumerate() {
                for (b, &c) in g.iter().enumerate() {
                    lm[(r, c)] = f[(a, b)];
                }
                for c in 0..d {
                    w[(r, c)] -= upd[(a, c)];
                }
            }
        }
        let mut dm = Matrix::zeros(d, d);
        for site in &l.sites {
            let g: Vec<usize> = site.range().collect();
            for &a in &g {
                for &b in &g {
                    dm[(a, b)] = w[(a, b)];
                }
            }
        }
        let um = dm.inverse().unwrap().matmul(&w);
        (lm, dm, um)
    }

    fn random_spec(l: Lattice, m: usize, seed: u64) -> CoefficientSpec<f64> {
        use rand::Rng;
        let mut rng = sample_rng(seed, 0);
        let mut spec = CoefficientSpec::zero(l, m);
        for k in 1..=m {
            for i in 0..spec.lattice.len().saturating_sub(k) {
                let (di, dk) = (spec.lattice.site(i).dim(), spec.lattice.site(i + k).dim());
                let mut poly = || Poly::new((0..3).map(|_| rng.gen_range(-0.5..0.5)).collect());
                spec.pbar
                    .insert((k, i), Matrix::from_fn(di, dk, |_, _| poly()));
                spec.p
                    .insert((k, i), Matrix::from_fn(dk, di, |_, _| poly()));
            }
        }
        spec
    }

    #[test]
    fn identity_gives_unit_fields() {
        let l = lattice("0,1,0,1");
        let f = fields_at(&Matrix::<Rational>::identity(5), &l).unwrap();
        assert!(f
            .y
            .iter()
            .chain(&f.z)
            .all(|m| *m == Matrix::identity(m.rows())));
        assert!(f.brackets.iter().all(|b| *b == Rational::from_i64(1)));
        let c = correction_matrices(&Matrix::<Rational>::identity(5), &l).unwrap();
        assert!(c
            .abar
            .values()
            .chain(c.bbar.values())
            .chain(c.a.values())
            .all(Matrix::is_zero));
    }

    #[test]
    fn scalar_sites_give_ratio_fields() {
        let l = lattice("1,1,1");
        let k: Matrix<Rational> = random_unipotent(3, 1.0, &mut sample_rng(3, 0));
        let f = fields_at(&k, &l).unwrap();
        for (i, y) in f.y.iter().enumerate() {
            assert_eq!(y[(0, 0)], principal(&k, i + 1) / principal(&k, i));
            assert_eq!(y.det() * f.z[i].det(), Rational::from_i64(1));
        }
    }

    #[test]
    fn inverse_relation_holds_exactly() {
        for c in ["0,1,0", "0,1,0,1", "0,0,1,0", "1,0,0"] {
            let l = lattice(c);
            let k: Matrix<Rational> = random_unipotent(l.n, 1.0, &mut sample_rng(5, l.n as u64));
            let f = fields_at(&k, &l).unwrap();
            let signs = determine_signs(&f, 0.0).unwrap();
            for (i, t) in signs.iter().enumerate() {
                assert_eq!(inverse_relation_residual(&f.y[i], &f.z[i], t).unwrap(), 0.0);
                assert!(t.alternates(), "{c} site {i}: {t:?}");
                assert_eq!(f.y[i].det() * f.z[i].det(), Rational::from_i64(1));
            }
        }
    }

    #[test]
    fn inverse_relation_float_a3() {
        let l = lattice("0,1,0");
        let mut rng = sample_rng(9, 1);
        let k: Matrix<f64> = random_unipotent(3, 1.0, &mut rng);
        let f = fields_at(&k, &l).unwrap();
        let signs = determine_signs(&f, 1e-9).unwrap();
        for (i, t) in signs.iter().enumerate() {
            assert!(inverse_relation_residual(&f.y[i], &f.z[i], t).unwrap() < 1e-9);
        }
    }

    #[test]
    fn corrections_match_block_gauss_factorization() {
        let l = lattice("0,1,1,0,1,1");
        let k: Matrix<f64> = random_unipotent(6, 0.8, &mut sample_rng(2, 0));
        let (lm, dm, um) = block_ldu(&k, &l);
        let (li, ui) = (lm.inverse().unwrap(), um.inverse().unwrap());
        let c = correction_matrices(&k, &l).unwrap();
        let f = fields_at(&k, &l).unwrap();
        let blk = |m: &Matrix<f64>, a: usize, b: usize| {
            let r: Vec<usize> = l.site(a).range().collect();
            let cc: Vec<usize> = l.site(b).range().collect();
            m.submatrix(&r, &cc)
        };
        for (&(i, j), abar) in &c.abar {
            assert!(abar.max_abs_diff(&blk(&li, i, j).scale(&-1.0)) < 1e-10);
            assert!(c.bbar[&(i, j)].max_abs_diff(&blk(&lm, i, j)) < 1e-10);
            assert!(c.a[&(j, i)].max_abs_diff(&blk(&ui, j, i).scale(&-1.0)) < 1e-10);
            assert!(c.b[&(j, i)].max_abs_diff(&blk(&um, j, i)) < 1e-10);
        }
        for (i, y) in f.y.iter().enumerate() {
            assert!(y.max_abs_diff(&blk(&dm, i, i)) < 1e-10);
        }
    }

    #[test]
    fn dressing_reduces_for_m1_and_expands_for_m2() {
        let l = lattice("0,1,0,1");
        let k: Matrix<Rational> = random_unipotent(4, 1.0, &mut sample_rng(4, 4));
        let c = correction_matrices(&k, &l).unwrap();
        let (x, y) = (Rational::from_ratio(1, 3), Rational::from_ratio(2, 5));
        let spec1 = random_spec(l.clone(), 1, 1).convert(|v| Rational::from_f64(*v));
        let d1 = dressed_pi(&spec1, &c, &x, &y).unwrap();
        for (key, pb) in &d1.pibar {
            assert_eq!(*pb, spec1.pbar_at(key.0, key.1, &y).unwrap());
            assert_eq!(d1.pi[key], spec1.p_at(key.0, key.1, &x).unwrap());
        }
        let spec2 = random_spec(l, 2, 2).convert(|v| Rational::from_f64(*v));
        let d2 = dressed_pi(&spec2, &c, &x, &y).unwrap();
        let pb = |k, i| spec2.pbar_at(k, i, &y).unwrap();
        let want0 = &pb(1, 0) + &pb(2, 0).matmul(&c.abar[&(2, 1)]);
        assert_eq!(d2.pibar[&(1, 0)], want0);
        let want1 = &pb(1, 1) - &c.abar[&(1, 0)].matmul(&pb(2, 0));
        assert_eq!(d2.pibar[&(1, 1)], want1);
        assert_eq!(d2.pibar[&(2, 0)], pb(2, 0));
        assert_eq!(d2.pi[&(2, 0)], spec2.p_at(2, 0, &x).unwrap());
    }

    fn residual_orders(
        spec: &CoefficientSpec<f64>,
        hs: [f64; 3],
    ) -> Vec<BTreeMap<Equation, ResidualStats>> {
        let coarse = GridSpec {
            x0: 0.0,
            x1: 0.4,
            y0: 0.0,
            y1: 0.4,
            h: hs[0],
        };
        let probes = probe_nodes(&coarse, 3).unwrap();
        (0..3)
            .map(|lvl| {
                let g = coarse.refined(lvl);
                let flows = solve_flows(spec, &g, Mode::Float).unwrap();
                equation_residuals(spec, &flows, &coarse, lvl, &probes).unwrap()
            })
            .collect()
    }

    #[test]
    fn equations_of_motion_converge_quadratically() {
        for (c, m) in [("0,1,0", 1), ("0,1,0,1", 2), ("0,1,1,0,1,1", 3), ("1,1", 1)] {
            let spec = random_spec(lattice(c), m, 7);
            let res = residual_orders(&spec, [0.04, 0.02, 0.01]);
            for e in Equation::ALL {
                let Some(r0) = res[0].get(&e) else { continue };
                let r1 = &res[1][&e];
                if r0.max < 1e-11 {
                    continue;
                }
                let ratio = r0.max / r1.max;
                assert!(
                    (3.3..4.8).contains(&ratio),
                    "{c} {e:?}: {} -> {} ratio {ratio}",
                    r0.max,
                    r1.max
                );
            }
        }
    }

    #[test]
    fn zero_spec_has_zero_residuals() {
        let spec = CoefficientSpec::<f64>::zero(lattice("0,1,0"), 1);
        let res = residual_orders(&spec, [0.1, 0.05, 0.025]);
        assert!(res.iter().all(|m| m.values().all(|s| s.max == 0.0)));
    }

    #[test]
    fn solution_field_and_inverse_report() {
        let spec = CoefficientSpec::<Rational>::identity(lattice("0,1,0"), 1);
        let grid = GridSpec::unit(0.25);
        let kg = KGrid::from_flows(&solve_flows(&spec, &grid, Mode::Exact).unwrap()).unwrap();
        let field = build_solution_field(&kg, &spec.lattice).unwrap();
        assert_eq!(field.at(0, 0).y[0], Matrix::identity(2));
        let rep = check_inverse_relation(&field, 0.0).unwrap();
        assert_eq!(rep.max_residual, 0.0);
        assert_eq!(rep.max_det_defect, 0.0);
        assert_eq!(rep.points, 25);
    }
}
