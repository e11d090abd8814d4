//! Experiment orchestration: identity suite, field construction, residual
//! convergence study and Goursat oracle, each producing report checks.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::bordered::{intermediate_determinants, recursion_residuals, Calibrations};
use crate::cartan::{cartan_matrix, Lattice};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::flow::{basis_rep, mixed_log_derivative_check, solve_flows, GridSpec, KGrid, Mode};
use crate::identities::{
    check_second_jacobi, first_jacobi_relative, generalized_jacobi_minor, random_group_element,
    random_unipotent, sample_rng,
};
use crate::matrix::Matrix;
use crate::rep::{check_chevalley, check_grading_operator, fundamental_rep, red_basis, BasisKind};
use crate::report::{Check, Report};
use crate::scalar::{Rational, Scalar};
use crate::toda::{
    build_solution_field, check_inverse_relation, equation_residuals, fields_at, probe_nodes,
    Equation,
};
use crate::verifier::{convergence_reports, goursat_integrate, ConvergenceReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Verify,
    Solve,
    Residual,
    Goursat,
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Solve => "solve",
            Command::Residual => "residual",
            Command::Goursat => "goursat",
            Command::Report => "report",
        }
    }
}

const NORMALIZATION: &str =
    "flows are normalized to the identity at (x0, y0); the initial data is a choice of this tool";
const CALIBRATION: &str =
    "bordered identity constants are calibrated at K = I and on single-generator exponentials";
const STREAM_UNIPOTENT: u64 = 1 << 32;

fn header(cmd: Command, cfg: &ExperimentConfig) -> Report {
    Report {
        tool: "lieflow".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.name().into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        mode: match cfg.mode {
            Mode::Exact => "exact".into(),
            Mode::Float => "float".into(),
        },
        n: cfg.n,
        grading: cfg
            .grading_vector()
            .map(|g| g.to_string())
            .unwrap_or_else(|_| cfg.grading.clone().unwrap_or_default()),
        m: cfg.m,
        checks: vec![],
        notes: vec![],
        pass: false,
        error: None,
    }
}

/// Runs a subcommand. Field dumps go to `out` when given. Errors are
/// recorded in the report together with the checks completed before them.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out: Option<&Path>) -> Report {
    let mut report = header(cmd, cfg);
    let result = cfg.validate().and_then(|()| match cmd {
        Command::Verify => verify(cfg, &mut report),
        Command::Solve => solve(cfg, out, &mut report),
        Command::Residual => residual(cfg, &mut report),
        Command::Goursat => goursat(cfg, &mut report),
        Command::Report => verify(cfg, &mut report)
            .and_then(|()| solve(cfg, out, &mut report))
            .and_then(|()| residual(cfg, &mut report))
            .and_then(|()| goursat(cfg, &mut report)),
    });
    if let Err(e) = result {
        report.fail(&e);
    }
    report.finish()
}

/// Named residual lists kept in first-insertion order.
#[derive(Default)]
struct Tally {
    order: Vec<String>,
    values: BTreeMap<String, Vec<f64>>,
}

impl Tally {
    fn add(&mut self, name: &str, v: f64) {
        if !self.values.contains_key(name) {
            self.order.push(name.to_string());
        }
        self.values.entry(name.to_string()).or_default().push(v);
    }

    fn merge(&mut self, other: Tally) {
        for name in other.order {
            for v in &other.values[&name] {
                self.add(&name, *v);
            }
        }
    }

    fn into_checks(self, anchor: impl Fn(&str) -> (String, f64)) -> Vec<Check> {
        self.order
            .iter()
            .map(|name| {
                let (a, tol) = anchor(name);
                Check::from_values(name, &a, &self.values[name], tol)
            })
            .collect()
    }
}

fn rel_diff<T: Scalar>(a: &T, b: &T) -> f64 {
    let d = a.clone() - b.clone();
    if d.is_zero() {
        0.0
    } else {
        d.magnitude() / b.magnitude().max(1.0)
    }
}

fn verify(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    algebra_checks(cfg, report)?;
    match cfg.mode {
        Mode::Exact => identity_suite::<Rational>(cfg, report),
        Mode::Float => identity_suite::<f64>(cfg, report),
    }
}

fn algebra_checks(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let n = cfg.n;
    let cd = cartan_matrix(n)?;
    let grading = cfg.grading_vector()?;
    let mut chevalley = Vec::new();
    let mut grading_op = Vec::new();
    let mut relations = 0;
    for j in 1..=n {
        let rep = fundamental_rep(n, j)?;
        let (count, violations) = check_chevalley(&rep, &cd);
        relations += count;
        chevalley.push(violations.len() as f64);
        grading_op.push(if check_grading_operator(&rep, &cd, &grading)? {
            0.0
        } else {
            1.0
        });
    }
    report.push(
        Check::from_values(
            "chevalley_relations",
            "algebra/chevalley-relations",
            &chevalley,
            0.0,
        )
        .with_note(format!(
            "{relations} relations checked in integer arithmetic over {n} representations"
        )),
    );
    report.push(Check::from_values(
        "grading_operator",
        "algebra/grading-operator",
        &grading_op,
        0.0,
    ));
    Ok(())
}

fn identity_anchor(name: &str) -> &'static str {
    match name {
        "first_jacobi" => "group/first-jacobi",
        "second_jacobi" => "group/second-jacobi",
        "generalized_jacobi" => "group/generalized-jacobi-minors",
        "recursion_raising" | "recursion_lowering" => "ratios/recursion",
        "recursion_sum" => "ratios/sum-identity",
        "recursion_border_element" => "ratios/border-element",
        "determinant_formula" => "blocks/determinant-formula",
        "black_root_jacobi" => "blocks/black-root-jacobi",
        "border_element" => "blocks/border-element",
        _ => "blocks/bordered-determinants",
    }
}

fn identity_suite<T: Scalar>(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let n = cfg.n;
    let lattice = cfg.lattice()?;
    let exact = T::EXACT;
    let t = &cfg.tolerances;
    let chains: Vec<_> = lattice
        .sites
        .iter()
        .flat_map(|site| [BasisKind::First, BasisKind::Last].map(|kind| (site, kind)))
        .filter(|(site, kind)| (1..=n).contains(&basis_rep(site, *kind)))
        .collect();
    let reps: Vec<_> = chains
        .iter()
        .map(|(site, kind)| fundamental_rep(n, basis_rep(site, *kind)))
        .collect::<Result<_>>()?;
    let bases: Vec<Vec<Vec<i64>>> = chains
        .iter()
        .zip(&reps)
        .map(|((site, kind), rep)| red_basis(rep, site, *kind))
        .collect::<Result<_>>()?;
    let calibrations = Calibrations::<T>::new(&lattice)?;

    let per_sample: Vec<Tally> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|s| -> Result<Tally> {
            let mut tally = Tally::default();
            let g = random_group_element::<T, _>(n, &mut sample_rng(cfg.seed, s));
            for j in 1..=n {
                tally.add("first_jacobi", first_jacobi_relative(&g, j)?);
            }
            for i in 1..n {
                for (a, b) in [(i, i + 1), (i + 1, i)] {
                    let r = check_second_jacobi(&g, a, b)?;
                    tally.add(
                        "second_jacobi",
                        if r.is_zero() { 0.0 } else { r.magnitude() },
                    );
                }
            }
            for (basis, rep) in bases.iter().zip(&reps) {
                for size in 1..=basis.len() {
                    let (minor, predicted) = generalized_jacobi_minor(&g, rep, basis, size)?;
                    tally.add("generalized_jacobi", rel_diff(&minor, &predicted));
                }
            }
            let k: Matrix<T> =
                random_unipotent(n, 1.0, &mut sample_rng(cfg.seed, STREAM_UNIPOTENT + s));
            for m in 1..n {
                for order in 1..=(n - m).min(4) {
                    let r = recursion_residuals(&k, m, order)?;
                    tally.add("recursion_raising", r.raising);
                    tally.add("recursion_lowering", r.lowering);
                    tally.add("recursion_sum", r.sum);
                    tally.add("recursion_border_element", r.border_element);
                }
            }
            for c in intermediate_determinants(&k, &lattice, &calibrations)? {
                tally.add(&c.identity, c.residual);
            }
            Ok(tally)
        })
        .collect::<Result<_>>()?;
    let mut tally = Tally::default();
    for s in per_sample {
        tally.merge(s);
    }
    let checks = tally.into_checks(|name| {
        let tol = if exact {
            0.0
        } else {
            match name {
                "second_jacobi" => t.second_jacobi,
                "recursion_raising"
                | "recursion_lowering"
                | "recursion_sum"
                | "recursion_border_element" => t.recursion,
                _ => t.identity,
            }
        };
        (identity_anchor(name).to_string(), tol)
    });
    for c in checks {
        report.push(c);
    }
    if calibrations.iter().next().is_some() {
        report.note(CALIBRATION);
    }
    Ok(())
}

fn solve(cfg: &ExperimentConfig, out: Option<&Path>, report: &mut Report) -> Result<()> {
    report.note(NORMALIZATION);
    match cfg.mode {
        Mode::Exact => solve_typed::<Rational>(cfg, out, report),
        Mode::Float => solve_typed::<f64>(cfg, out, report),
    }
}

fn strided(grid: &GridSpec, stride: usize) -> Result<Vec<(usize, usize)>> {
    let (nx, ny) = grid.cells()?;
    let stride = stride.max(1);
    Ok((0..=nx)
        .step_by(stride)
        .flat_map(|p| (0..=ny).step_by(stride).map(move |q| (p, q)))
        .collect())
}

fn solve_typed<T: Scalar>(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    report: &mut Report,
) -> Result<()> {
    let spec = cfg.spec::<T>()?;
    let lattice = spec.lattice.clone();
    let coarse = cfg.grid.spec();
    let tol = if T::EXACT {
        0.0
    } else {
        cfg.tolerances.identity
    };
    let flows = solve_flows(&spec, &coarse, cfg.mode)?;
    let kg = KGrid::from_flows(&flows)?;
    let field = build_solution_field(&kg, &lattice)?;
    let inv = check_inverse_relation(&field, cfg.tolerances.identity)?;
    let patterns: Vec<String> = inv
        .signs
        .iter()
        .map(|s| {
            s.signs
                .iter()
                .map(|&v| if v > 0 { '+' } else { '-' })
                .collect()
        })
        .collect();
    report.push(
        Check {
            samples: inv.points,
            ..Check::from_values(
                "inverse_relation",
                "fields/inverse-relation",
                &[inv.max_residual],
                tol,
            )
        }
        .with_note(format!(
            "antidiagonal sign patterns per site: {}",
            patterns.join(" ")
        )),
    );
    report.push(Check {
        samples: inv.points,
        ..Check::from_values(
            "determinant_product",
            "fields/determinant-product",
            &[inv.max_det_defect],
            tol,
        )
    });

    let nodes = strided(&coarse, cfg.grid.dump_stride()?)?;
    let calibrations = Calibrations::<T>::new(&lattice)?;
    let per_node: Vec<Tally> = nodes
        .par_iter()
        .map(|&(p, q)| -> Result<Tally> {
            let mut tally = Tally::default();
            for c in intermediate_determinants(kg.at(p, q), &lattice, &calibrations)? {
                tally.add(&format!("field_{}", c.identity), c.residual);
            }
            Ok(tally)
        })
        .collect::<Result<_>>()?;
    let mut tally = Tally::default();
    for t in per_node {
        tally.merge(t);
    }
    for c in tally.into_checks(|name| {
        (
            identity_anchor(name.trim_start_matches("field_")).to_string(),
            tol,
        )
    }) {
        report.push(c);
    }
    if calibrations.iter().next().is_some() {
        report.note(CALIBRATION);
    }

    let black: Vec<usize> = (1..=cfg.n)
        .filter(|&i| lattice.grading.get(i) == 1)
        .collect();
    let mut mixed = Vec::new();
    let mut skipped = 0;
    let mut points = 0;
    for &i in &black {
        let r = mixed_log_derivative_check(&kg, &spec, i)?;
        mixed.push(r.max_residual);
        skipped += r.skipped;
        points += r.points;
    }
    if !black.is_empty() {
        let mut c = Check::from_values(
            "mixed_log_derivative",
            "fields/mixed-log-derivative",
            &mixed,
            cfg.tolerances.residual_cap,
        );
        c.samples = points;
        report.push(if skipped > 0 {
            c.with_note(format!(
                "{skipped} nodes skipped: non-positive principal minor"
            ))
        } else {
            c
        });
    }

    if let Some(dir) = out {
        let files = dump_fields(&spec, cfg, &lattice, &flows, dir)?;
        report.note(format!("field dumps: {files} CSV files"));
    }
    Ok(())
}

fn dump_fields<T: Scalar>(
    spec: &crate::flow::CoefficientSpec<T>,
    cfg: &ExperimentConfig,
    lattice: &Lattice,
    level0: &crate::flow::Flows<T>,
    dir: &Path,
) -> Result<usize> {
    let io = |e: std::io::Error| Error::Config(format!("cannot write to {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let coarse = cfg.grid.spec();
    let nodes = strided(&coarse, cfg.grid.dump_stride()?)?;
    let mut files = 0;
    for level in 0..=cfg.grid.refinements {
        let fine;
        let flows = if level == 0 {
            level0
        } else {
            fine = solve_flows(spec, &coarse.refined(level), cfg.mode)?;
            &fine
        };
        let f = 1usize << level;
        let rows: Vec<(f64, f64, Vec<Matrix<f64>>)> = nodes
            .par_iter()
            .map(|&(p, q)| -> Result<(f64, f64, Vec<Matrix<f64>>)> {
                let k = flows.mplus[q * f].matmul(&flows.mminus[p * f]);
                let pf = fields_at(&k, lattice)?;
                Ok((
                    coarse.x::<f64>(p),
                    coarse.y::<f64>(q),
                    pf.y.iter().map(Matrix::to_f64).collect(),
                ))
            })
            .collect::<Result<_>>()?;
        for (i, site) in lattice.sites.iter().enumerate() {
            let d = site.dim();
            let path = dir.join(format!("y{}_level{level}.csv", i + 1));
            let mut w = csv::Writer::from_path(&path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let csv_err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
            let mut head = vec!["x".to_string(), "y".to_string()];
            head.extend((0..d).flat_map(|r| (0..d).map(move |c| format!("y_{}_{}", r + 1, c + 1))));
            w.write_record(&head).map_err(csv_err)?;
            for (x, y, ys) in &rows {
                let mut rec = vec![x.to_string(), y.to_string()];
                rec.extend(ys[i].data().iter().map(f64::to_string));
                w.write_record(&rec).map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
            files += 1;
        }
    }
    Ok(files)
}

fn equation_anchor(e: Equation) -> &'static str {
    match e {
        Equation::Toda => "equations/toda",
        Equation::PibarFlow => "equations/pibar-x-flow",
        Equation::PiFlow => "equations/pi-y-flow",
        Equation::AbarFlow => "equations/abar-x-flow",
        Equation::AFlow => "equations/a-y-flow",
    }
}

fn steps(h: f64, levels: u32) -> Vec<f64> {
    (0..=levels).map(|l| h / f64::from(1u32 << l)).collect()
}

fn residual(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    if cfg.grid.refinements == 0 {
        return Err(Error::Config(
            "the residual study needs grid.refinements >= 1".into(),
        ));
    }
    if cfg.mode == Mode::Exact {
        report.note("finite-difference residual studies are evaluated in floating point");
    }
    report.note(NORMALIZATION);
    let spec = cfg.spec::<f64>()?;
    let coarse = cfg.grid.spec();
    let probes = probe_nodes(&coarse, cfg.grid.probe_stride()?)?;
    let mut maxima = Vec::new();
    let mut means = Vec::new();
    for level in 0..=cfg.grid.refinements {
        let flows = solve_flows(&spec, &coarse.refined(level), Mode::Float)?;
        let stats = equation_residuals(&spec, &flows, &coarse, level, &probes)?;
        maxima.push(
            stats
                .iter()
                .map(|(e, s)| (*e, s.max))
                .collect::<BTreeMap<_, _>>(),
        );
        means.push(
            stats
                .iter()
                .map(|(e, s)| (*e, s.mean))
                .collect::<BTreeMap<_, _>>(),
        );
    }
    let t = &cfg.tolerances;
    let hs = steps(coarse.h, cfg.grid.refinements);
    let reports = convergence_reports(
        &maxima,
        &hs,
        |e| e.name().to_string(),
        t.floor,
        t.order_target,
        t.order_band,
        t.residual_cap,
    )?;
    let finest = means.last().cloned().unwrap_or_default();
    for (e, r) in maxima[0].keys().zip(&reports) {
        let mean = finest.get(e).copied().unwrap_or(0.0);
        let c = Check::from_convergence(
            r,
            equation_anchor(*e),
            t.residual_cap,
            t.order_target,
            t.order_band,
            mean,
        );
        report.push(Check {
            samples: probes.len(),
            ..c
        });
    }
    Ok(())
}

fn goursat(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    if cfg.goursat.refinements == 0 {
        return Err(Error::Config(
            "the Goursat study needs goursat.refinements >= 1".into(),
        ));
    }
    let spec = cfg.spec::<f64>()?;
    let base = cfg.goursat.spec();
    let mut devs = Vec::new();
    let mut nodes = 0;
    for level in 0..=cfg.goursat.refinements {
        let o = goursat_integrate(&spec, &base.refined(level))?;
        devs.push(o.max_deviation);
        nodes = o.nodes;
    }
    let t = &cfg.tolerances;
    let hs = steps(base.h, cfg.goursat.refinements);
    let r = ConvergenceReport::new(
        "goursat_deviation",
        hs,
        devs,
        t.floor,
        t.order_target,
        t.goursat_band,
        t.goursat_cap,
    )?;
    let mean = r.residuals.last().copied().unwrap_or(0.0);
    let c = Check::from_convergence(
        &r,
        "oracle/goursat",
        t.goursat_cap,
        t.order_target,
        t.goursat_band,
        mean,
    );
    report.push(
        Check {
            samples: nodes,
            ..c
        }
        .with_note("interior fields re-integrated from boundary traces only"),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, grading: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(n);
        c.grading = Some(grading.into());
        c
    }

    #[test]
    fn verify_small_all_pass() {
        let mut c = cfg(2, "1,1");
        c.samples = 20;
        c.seed = 42;
        let r = run(Command::Verify, &c, None);
        assert!(r.pass, "{}", r.to_json());
        let mut c = cfg(3, "0,1,0");
        c.mode = Mode::Exact;
        c.samples = 5;
        let r = run(Command::Verify, &c, None);
        assert!(r.pass, "{}", r.to_json());
        assert!(r.checks.iter().all(|k| k.max == 0.0), "{}", r.to_json());
    }

    #[test]
    fn malformed_grading_is_config_error() {
        let c = cfg(2, "1,2");
        let r = run(Command::Verify, &c, None);
        assert_eq!(r.exit_code(), 2);
        assert!(r.checks.is_empty());
    }

    #[test]
    fn solve_writes_dumps() {
        let mut c = cfg(3, "0,1,0");
        c.grid.h = 0.05;
        c.grid.refinements = 1;
        let dir = tempfile::tempdir().unwrap();
        let r = run(Command::Solve, &c, Some(dir.path()));
        assert!(r.pass, "{}", r.to_json());
        for name in ["y1_level0.csv", "y2_level1.csv"] {
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            assert_eq!(text.lines().next().unwrap(), "x,y,y_1_1,y_1_2,y_2_1,y_2_2");
            assert_eq!(text.lines().count(), 1 + 21 * 21);
        }
    }

    #[test]
    fn zero_spec_is_exact() {
        let mut c = cfg(3, "0,1,0");
        c.coefficients = crate::config::Coefficients::Named(crate::config::Fill::Zero);
        c.grid.h = 0.05;
        c.grid.refinements = 1;
        let r = run(Command::Residual, &c, None);
        assert!(r.pass, "{}", r.to_json());
    }
}
