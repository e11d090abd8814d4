use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lieflow::flow::Mode;
use lieflow::report::exit_code;
use lieflow::{Command, Error, ExperimentConfig};

/// Graded A_n Toda solutions: identity checks, field construction and
/// numerical certification.
#[derive(Parser)]
#[command(name = "lieflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Algebra and group identity suite over random samples.
    Verify(Common),
    /// Build fields from the flows, check algebraic relations, dump CSVs.
    Solve(Common),
    /// Finite-difference residual convergence of the field equations.
    Residual(Common),
    /// Re-integrate interior fields from boundary data.
    Goursat(Common),
    /// All of the above in one report.
    Report(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Float,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated 0/1 entries, e.g. 0,1,0.
    #[arg(long)]
    grading: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance for algebraic identities.
    #[arg(long)]
    tol: Option<f64>,
    /// Coarsest grid step.
    #[arg(long)]
    h: Option<f64>,
    /// Number of step halvings.
    #[arg(long)]
    refine: Option<u32>,
    /// Directory for report.json and field dumps.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> lieflow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                ExperimentConfig::from_json(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                    other => other,
                })?
            }
            None => ExperimentConfig::new(
                self.n
                    .ok_or_else(|| Error::Config("give --config or --n".into()))?,
            ),
        };
        if let Some(n) = self.n {
            if n != cfg.n {
                cfg.n = n;
                cfg.grading = None;
            }
        }
        if let Some(g) = &self.grading {
            cfg.grading = Some(g.clone());
        }
        if let Some(m) = self.mode {
            cfg.mode = match m {
                ModeArg::Exact => Mode::Exact,
                ModeArg::Float => Mode::Float,
            };
        }
        if let Some(s) = self.samples {
            cfg.samples = s;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.tol {
            cfg.tolerances.identity = t;
            cfg.tolerances.second_jacobi = t;
            cfg.tolerances.recursion = t;
        }
        if let Some(h) = self.h {
            cfg.grid.h = h;
            cfg.grid.probe_stride = None;
            cfg.grid.dump_stride = None;
        }
        if let Some(r) = self.refine {
            cfg.grid.refinements = r;
            cfg.goursat.refinements = r;
        }
        Ok(cfg)
    }
}

fn threads() -> Result<(), String> {
    let Ok(v) = std::env::var("LIEFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("LIEFLOW_THREADS={v:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let (cmd, common) = match &cli.command {
        Sub::Verify(c) => (Command::Verify, c),
        Sub::Solve(c) => (Command::Solve, c),
        Sub::Residual(c) => (Command::Residual, c),
        Sub::Goursat(c) => (Command::Goursat, c),
        Sub::Report(c) => (Command::Report, c),
    };
    let cfg = match common.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    let report = lieflow::run(cmd, &cfg, common.out.as_deref());
    let json = report.to_json();
    match &common.out {
        Some(dir) => {
            let path = dir.join("report.json");
            if let Err(e) = std::fs::create_dir_all(dir).and_then(|()| std::fs::write(&path, &json))
            {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => print!("{json}"),
    }
    for c in &report.checks {
        eprintln!(
            "{:<4} {:<32} max {:.3e}",
            if c.pass { "ok" } else { "FAIL" },
            c.name,
            c.max
        );
    }
    if let Some(e) = &report.error {
        eprintln!("error ({}): {}", e.kind, e.message);
    }
    ExitCode::from(report.exit_code() as u8)
}
