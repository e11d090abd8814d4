//! Grid-only oracles: mixed finite differences, convergence orders and a
//! characteristic (Goursat) march of the Toda system from boundary data.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{solve_flows, CoefficientSpec, GridSpec, Mode};
use crate::matrix::Matrix;
use crate::toda::{
    pi_flow_rhs, pibar_flow_rhs, point_data, toda_rhs, BlockMap, Dressed, PointData, PointFields,
};

/// Values that can enter a difference quotient.
pub trait Linear: Clone {
    fn sub(&self, o: &Self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
}

impl Linear for f64 {
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
}

impl Linear for Matrix<f64> {
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn scale(&self, s: f64) -> Self {
        Matrix::scale(self, &s)
    }
}

/// A field sampled on a rectangular grid, indexed `[p][q]`.
#[derive(Clone, Debug)]
pub struct Sampled<V> {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    values: Vec<V>,
}

impl<V: Linear> Sampled<V> {
    pub fn from_fn(nx: usize, ny: usize, h: f64, f: impl Fn(usize, usize) -> V) -> Self {
        let values = (0..=nx)
            .flat_map(|p| (0..=ny).map(move |q| (p, q)))
            .map(|(p, q)| f(p, q))
            .collect();
        Sampled { nx, ny, h, values }
    }

    pub fn at(&self, p: usize, q: usize) -> &V {
        &self.values[p * (self.ny + 1) + q]
    }
}

/// Central second mixed difference at node `(p, q)`.
pub fn finite_diff_mixed<V: Linear>(f: &Sampled<V>, p: usize, q: usize) -> Result<V> {
    if p == 0 || q == 0 || p >= f.nx || q >= f.ny {
        return Err(Error::Stencil(format!(
            "node ({p}, {q}) of a {}x{} grid",
            f.nx, f.ny
        )));
    }
    let v = f
        .at(p + 1, q + 1)
        .sub(f.at(p + 1, q - 1))
        .sub(f.at(p - 1, q + 1))
        .add(f.at(p - 1, q - 1));
    Ok(v.scale(0.25 / (f.h * f.h)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Order {
    Exact,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderEstimate {
    pub ratios: Vec<f64>,
    pub orders: Vec<f64>,
    pub order: Order,
}

/// Orders `log2(r_k / r_{k+1})` of residuals at successively halved steps.
/// Residuals all below `floor` give `Exact`.
pub fn estimate_order(residuals: &[f64], floor: f64) -> Result<OrderEstimate> {
    if residuals.len() < 2 || residuals.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Breakdown(format!(
            "cannot estimate an order from {residuals:?}"
        )));
    }
    if residuals.iter().all(|&r| r <= floor) {
        return Ok(OrderEstimate {
            ratios: vec![],
            orders: vec![],
            order: Order::Exact,
        });
    }
    let ratios: Vec<f64> = residuals
        .windows(2)
        .map(|w| w[0] / w[1].max(f64::MIN_POSITIVE))
        .collect();
    let orders: Vec<f64> = ratios.iter().map(|r| r.log2()).collect();
    let mean = orders.iter().sum::<f64>() / orders.len() as f64;
    Ok(OrderEstimate {
        ratios,
        orders,
        order: Order::Value(mean),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub name: String,
    pub steps: Vec<f64>,
    pub residuals: Vec<f64>,
    pub estimate: OrderEstimate,
    pub pass: bool,
}

impl ConvergenceReport {
    /// Passes when exact, or when every pairwise order lies in
    /// `target ± band` and the finest residual is below `cap`.
    pub fn new(
        name: &str,
        steps: Vec<f64>,
        residuals: Vec<f64>,
        floor: f64,
        target: f64,
        band: f64,
        cap: f64,
    ) -> Result<Self> {
        let estimate = estimate_order(&residuals, floor)?;
        let pass = match estimate.order {
            Order::Exact => true,
            Order::Value(_) => {
                estimate.orders.iter().all(|p| (p - target).abs() <= band)
                    && residuals.last().is_some_and(|&r| r <= cap)
            }
        };
        Ok(ConvergenceReport {
            name: name.into(),
            steps,
            residuals,
            estimate,
            pass,
        })
    }
}

/// Characteristic state at one node: `y_i`, `a_i = y_i^{-1} y_{i,x}` and the
/// dressed coefficients.
#[derive(Clone, Debug)]
pub struct GoursatState {
    pub y: Vec<Matrix<f64>>,
    pub a: Vec<Matrix<f64>>,
    pub pibar: BlockMap<f64>,
    pub pi: BlockMap<f64>,
}

/// Boundary traces on `y = y0` (row, indexed by `p`) and `x = x0`
/// (column, indexed by `q`). The march sees nothing else.
#[derive(Clone, Debug)]
pub struct GoursatProblem {
    pub grid: GridSpec,
    pub m: usize,
    pub y_row: Vec<Vec<Matrix<f64>>>,
    pub y_col: Vec<Vec<Matrix<f64>>>,
    pub pi_row: Vec<BlockMap<f64>>,
    pub pibar_col: Vec<BlockMap<f64>>,
}

/// Reference fields from the group construction on every node.
#[derive(Clone, Debug)]
pub struct ReferenceField {
    pub nx: usize,
    pub ny: usize,
    points: Vec<PointData<f64>>,
}

impl ReferenceField {
    pub fn build(spec: &CoefficientSpec<f64>, grid: &GridSpec) -> Result<Self> {
        let flows = solve_flows(spec, grid, Mode::Float)?;
        let (nx, ny) = grid.cells()?;
        let points = (0..(nx + 1) * (ny + 1))
            .into_par_iter()
            .map(|idx| {
                let (p, q) = (idx / (ny + 1), idx % (ny + 1));
                let k = flows.mplus[q].matmul(&flows.mminus[p]);
                point_data(&k, spec, &grid.x(p), &grid.y(q))
            })
            .collect::<Result<_>>()?;
        Ok(ReferenceField { nx, ny, points })
    }

    pub fn at(&self, p: usize, q: usize) -> &PointData<f64> {
        &self.points[p * (self.ny + 1) + q]
    }

    pub fn problem(&self, grid: &GridSpec, m: usize) -> GoursatProblem {
        GoursatProblem {
            grid: *grid,
            m,
            y_row: (0..=self.nx)
                .map(|p| self.at(p, 0).fields.y.clone())
                .collect(),
            y_col: (0..=self.ny)
                .map(|q| self.at(0, q).fields.y.clone())
                .collect(),
            pi_row: (0..=self.nx)
                .map(|p| self.at(p, 0).dressed.pi.clone())
                .collect(),
            pibar_col: (0..=self.ny)
                .map(|q| self.at(0, q).dressed.pibar.clone())
                .collect(),
        }
    }
}

fn view(s: &GoursatState) -> Result<PointData<f64>> {
    let yinv =
        s.y.iter()
            .map(|y| {
                y.inverse()
                    .ok_or_else(|| Error::Breakdown("y lost invertibility".into()))
            })
            .collect::<Result<Vec<_>>>()?;
    Ok(PointData {
        fields: PointFields {
            y: s.y.clone(),
            z: vec![],
            brackets: vec![],
        },
        yinv,
        dressed: Dressed {
            pi: s.pi.clone(),
            pibar: s.pibar.clone(),
        },
        abar_next: vec![],
        a_next: vec![],
    })
}

struct Rates {
    y_x: Vec<Matrix<f64>>,
    a_y: Vec<Matrix<f64>>,
    pibar_x: BlockMap<f64>,
    pi_y: BlockMap<f64>,
}

fn rates(s: &GoursatState, m: usize) -> Result<Rates> {
    let d = view(s)?;
    let sites = s.y.len();
    let y_x = s.y.iter().zip(&s.a).map(|(y, a)| y.matmul(a)).collect();
    let a_y = (0..sites).map(|i| toda_rhs(&d, m, i)).collect();
    let pibar_x = s
        .pibar
        .keys()
        .filter_map(|&(r, i)| Some(((r, i), pibar_flow_rhs(&d, m, r, i)?)))
        .collect();
    let pi_y =
        s.pi.keys()
            .filter_map(|&(r, i)| Some(((r, i), pi_flow_rhs(&d, m, r, i)?)))
            .collect();
    Ok(Rates {
        y_x,
        a_y,
        pibar_x,
        pi_y,
    })
}

fn step_vec(
    base: &[Matrix<f64>],
    r0: &[Matrix<f64>],
    r1: Option<&[Matrix<f64>]>,
    h: f64,
) -> Vec<Matrix<f64>> {
    base.iter()
        .enumerate()
        .map(|(i, b)| match r1 {
            None => b + &r0[i].scale(&h),
            Some(r1) => b + &(&r0[i] + &r1[i]).scale(&(0.5 * h)),
        })
        .collect()
}

fn step_map(
    base: &BlockMap<f64>,
    r0: &BlockMap<f64>,
    r1: Option<&BlockMap<f64>>,
    h: f64,
) -> BlockMap<f64> {
    base.iter()
        .map(|(key, b)| {
            let v = match r1 {
                None => b + &r0[key].scale(&h),
                Some(r1) => b + &(&r0[key] + &r1[key]).scale(&(0.5 * h)),
            };
            (*key, v)
        })
        .collect()
}

fn finite(s: &GoursatState) -> bool {
    s.y.iter()
        .chain(&s.a)
        .chain(s.pi.values())
        .chain(s.pibar.values())
        .all(|m| m.data().iter().all(|v| v.is_finite()))
}

/// Second-order one-sided/central derivative of a trace.
fn trace_derivative(trace: &[Vec<Matrix<f64>>], idx: usize, i: usize, h: f64) -> Matrix<f64> {
    let n = trace.len() - 1;
    let v = |k: usize| &trace[k][i];
    if n < 2 {
        return (v(n) - v(0)).scale(&(1.0 / h));
    }
    if idx == 0 {
        (&(&v(1).scale(&4.0) - &v(0).scale(&3.0)) - v(2)).scale(&(0.5 / h))
    } else if idx == n {
        (&(&v(n).scale(&3.0) - &v(n - 1).scale(&4.0)) + v(n - 2)).scale(&(0.5 / h))
    } else {
        (v(idx + 1) - v(idx - 1)).scale(&(0.5 / h))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoursatOutcome {
    pub h: f64,
    pub max_deviation: f64,
    pub nodes: usize,
}

/// Marches all nodes from the two boundary lines with a Heun
/// predictor-corrector per cell, anti-diagonal by anti-diagonal.
pub fn goursat_march(problem: &GoursatProblem) -> Result<Vec<GoursatState>> {
    let (nx, ny) = problem.grid.cells()?;
    let (h, m) = (problem.grid.h, problem.m);
    let sites = problem.y_row[0].len();
    let idx = |p: usize, q: usize| p * (ny + 1) + q;
    let mut states: Vec<Option<GoursatState>> = vec![None; (nx + 1) * (ny + 1)];
    let at = |p: usize, q: usize| -> Error {
        let g = &problem.grid;
        Error::Breakdown(format!(
            "y lost invertibility at (x, y) = ({}, {})",
            g.x::<f64>(p),
            g.y::<f64>(q)
        ))
    };
    let loc = |e: Error, p: usize, q: usize| match e {
        Error::Breakdown(_) => at(p, q),
        other => other,
    };

    let row_a = |p: usize| -> Result<Vec<Matrix<f64>>> {
        (0..sites)
            .map(|i| {
                let inv = problem.y_row[p][i].inverse().ok_or_else(|| at(p, 0))?;
                Ok(inv.matmul(&trace_derivative(&problem.y_row, p, i, h)))
            })
            .collect()
    };

    // Row y = y0: pibar evolves in x with y, a, pi known.
    let mut pibar = problem.pibar_col[0].clone();
    for p in 0..=nx {
        let s = GoursatState {
            y: problem.y_row[p].clone(),
            a: row_a(p)?,
            pibar: pibar.clone(),
            pi: problem.pi_row[p].clone(),
        };
        if p < nx {
            let r0 = rates(&s, m).map_err(|e| loc(e, p, 0))?.pibar_x;
            let pred = GoursatState {
                y: problem.y_row[p + 1].clone(),
                a: row_a(p + 1)?,
                pibar: step_map(&pibar, &r0, None, h),
                pi: problem.pi_row[p + 1].clone(),
            };
            let r1 = rates(&pred, m).map_err(|e| loc(e, p + 1, 0))?.pibar_x;
            pibar = step_map(&pibar, &r0, Some(&r1), h);
        }
        states[idx(p, 0)] = Some(s);
    }

    // Column x = x0: a and pi evolve in y with y, pibar known.
    let first = states[idx(0, 0)].clone().ok_or_else(|| at(0, 0))?;
    let (mut a, mut pi) = (first.a.clone(), first.pi.clone());
    for q in 1..=ny {
        let s0 = GoursatState {
            y: problem.y_col[q - 1].clone(),
            a: a.clone(),
            pibar: problem.pibar_col[q - 1].clone(),
            pi: pi.clone(),
        };
        let r0 = rates(&s0, m).map_err(|e| loc(e, 0, q - 1))?;
        let pred = GoursatState {
            y: problem.y_col[q].clone(),
            a: step_vec(&a, &r0.a_y, None, h),
            pibar: problem.pibar_col[q].clone(),
            pi: step_map(&pi, &r0.pi_y, None, h),
        };
        let r1 = rates(&pred, m).map_err(|e| loc(e, 0, q))?;
        a = step_vec(&a, &r0.a_y, Some(&r1.a_y), h);
        pi = step_map(&pi, &r0.pi_y, Some(&r1.pi_y), h);
        states[idx(0, q)] = Some(GoursatState {
            y: problem.y_col[q].clone(),
            a: a.clone(),
            pibar: problem.pibar_col[q].clone(),
            pi: pi.clone(),
        });
    }

    for diag in 2..=nx + ny {
        let nodes: Vec<(usize, usize)> = (1..=nx)
            .filter(|&p| diag > p && diag - p >= 1 && diag - p <= ny)
            .map(|p| (p, diag - p))
            .collect();
        let done: Vec<((usize, usize), GoursatState)> = nodes
            .par_iter()
            .map(|&(p, q)| -> Result<((usize, usize), GoursatState)> {
                let west = states[idx(p - 1, q)].as_ref().ok_or_else(|| at(p - 1, q))?;
                let south = states[idx(p, q - 1)].as_ref().ok_or_else(|| at(p, q - 1))?;
                let rw = rates(west, m).map_err(|e| loc(e, p - 1, q))?;
                let rs = rates(south, m).map_err(|e| loc(e, p, q - 1))?;
                let pred = GoursatState {
                    y: step_vec(&west.y, &rw.y_x, None, h),
                    pibar: step_map(&west.pibar, &rw.pibar_x, None, h),
                    a: step_vec(&south.a, &rs.a_y, None, h),
                    pi: step_map(&south.pi, &rs.pi_y, None, h),
                };
                let rp = rates(&pred, m).map_err(|e| loc(e, p, q))?;
                let s = GoursatState {
                    y: step_vec(&west.y, &rw.y_x, Some(&rp.y_x), h),
                    pibar: step_map(&west.pibar, &rw.pibar_x, Some(&rp.pibar_x), h),
                    a: step_vec(&south.a, &rs.a_y, Some(&rp.a_y), h),
                    pi: step_map(&south.pi, &rs.pi_y, Some(&rp.pi_y), h),
                };
                if !finite(&s) {
                    return Err(at(p, q));
                }
                Ok(((p, q), s))
            })
            .collect::<Result<_>>()?;
        for ((p, q), s) in done {
            states[idx(p, q)] = Some(s);
        }
    }
    states
        .into_iter()
        .enumerate()
        .map(|(k, s)| s.ok_or_else(|| at(k / (ny + 1), k % (ny + 1))))
        .collect()
}

/// Marches from the reference boundary traces and returns the largest
/// relative deviation of `y_i` from the reference over all nodes.
pub fn goursat_integrate(spec: &CoefficientSpec<f64>, grid: &GridSpec) -> Result<GoursatOutcome> {
    let reference = ReferenceField::build(spec, grid)?;
    let problem = reference.problem(grid, spec.m);
    let states = goursat_march(&problem)?;
    let ny = reference.ny;
    let max_deviation = states
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let r = &reference.at(k / (ny + 1), k % (ny + 1)).fields.y;
            s.y.iter()
                .zip(r)
                .map(|(a, b)| a.max_abs_diff(b) / b.max_abs().max(1.0))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(GoursatOutcome {
        h: grid.h,
        max_deviation,
        nodes: states.len(),
    })
}

/// Residual maps at several levels turned into convergence reports.
pub fn convergence_reports<K: Ord + Clone>(
    levels: &[BTreeMap<K, f64>],
    steps: &[f64],
    name: impl Fn(&K) -> String,
    floor: f64,
    target: f64,
    band: f64,
    cap: f64,
) -> Result<Vec<ConvergenceReport>> {
    let Some(first) = levels.first() else {
        return Ok(vec![]);
    };
    first
        .keys()
        .map(|key| {
            let res: Vec<f64> = levels
                .iter()
                .map(|l| l.get(key).copied().unwrap_or(0.0))
                .collect();
            ConvergenceReport::new(&name(key), steps.to_vec(), res, floor, target, band, cap)
        })
        .collect()
}
