//! `fpf`: compile equilibrium instances to fixed-point circuits, solve and verify them.
//!
//! Exit codes: 0 pass or converged, 1 usage or input error, 2 verification
//! failure, 3 no convergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fpf_core::io::{self, InstanceFile, RunError, RunReport};
use fpf_core::selftest;
use fpf_core::solver::{SolverConfig, SolverError};

const USAGE: u8 = 1;
const VERIFY_FAILED: u8 = 2;
const NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "fpf", version, about = "Fixed-point circuits for equilibrium problems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile an instance to a standalone circuit file.
    Compile {
        instance: PathBuf,
        #[arg(short = 'o')]
        out: Option<PathBuf>,
    },
    /// Solve an instance (or a circuit file) and verify the fixed point found.
    Solve {
        /// Instance file; omit when `--circuit` is given.
        #[arg(required_unless_present = "circuit", conflicts_with = "circuit")]
        instance: Option<PathBuf>,
        /// Solve a circuit file written by `compile`.
        #[arg(long)]
        circuit: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Tolerance of the equilibrium checks.
        #[arg(long, default_value_t = io::run::DEFAULT_EPS)]
        eps: f64,
        #[arg(short = 'o')]
        out: Option<PathBuf>,
    },
    /// Verify a point file against an instance.
    Verify {
        instance: PathBuf,
        point: PathBuf,
        #[arg(long, default_value_t = io::run::DEFAULT_EPS)]
        eps: f64,
        #[arg(short = 'o')]
        out: Option<PathBuf>,
    },
    /// Print a human-readable summary of a run report.
    Report {
        report: PathBuf,
        #[arg(short = 'o')]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Selftest {
        /// Comma-separated criterion ids (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
        /// Print the log of every criterion, not only failing ones.
        #[arg(long)]
        verbose: bool,
    },
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Anderson memory (0 disables acceleration).
    #[arg(long)]
    anderson: Option<usize>,
    /// Use the grid oracle (dimension <= 3) instead of iteration.
    #[arg(long)]
    grid: bool,
    /// JSON solver configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl std::fmt::Display) -> Self {
        Failure { code: USAGE, msg: msg.to_string() }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match &e {
            RunError::NoFixedPoint(_) | RunError::Solver(SolverError::DivergedToNaN(_)) => NOT_CONVERGED,
            _ => USAGE,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => {
                let bytes = read(p)?;
                serde_json::from_slice(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?
            }
            None => SolverConfig::default(),
        };
        set(&mut cfg.tol, self.tol);
        set(&mut cfg.alpha, self.alpha);
        set(&mut cfg.restarts, self.restarts);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.max_iters, self.max_iters);
        set(&mut cfg.anderson_memory, self.anderson);
        cfg.validate().map_err(Failure::usage)?;
        Ok(cfg)
    }
}

fn set<T: Copy>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

fn solve_status(r: &RunReport) -> u8 {
    if !r.fixed_point.converged {
        NOT_CONVERGED
    } else if !r.verification.pass {
        VERIFY_FAILED
    } else {
        0
    }
}

fn run(cmd: Cmd) -> Result<u8, Failure> {
    match cmd {
        Cmd::Compile { instance, out } => {
            let problem = InstanceFile::parse(&read(&instance)?).and_then(|f| f.problem()).map_err(RunError::from)?;
            let compiled = problem.compile().map_err(RunError::from)?;
            emit(out.as_deref(), &compiled.to_file().to_text())?;
            Ok(0)
        }
        Cmd::Solve { instance, circuit, solver, eps, out } => {
            let cfg = solver.config()?;
            let report = match (instance, circuit) {
                (Some(p), _) => io::solve_instance(&read(&p)?, &cfg, solver.grid, eps)?,
                (None, Some(c)) => io::solve_circuit(&read(&c)?, &cfg, solver.grid, eps)?,
                (None, None) => return Err(Failure::usage("an instance or --circuit is required")),
            };
            emit(out.as_deref(), &to_json(&report))?;
            Ok(solve_status(&report))
        }
        Cmd::Verify { instance, point, eps, out } => {
            let report = io::verify_instance(&read(&instance)?, &read(&point)?, eps)?;
            emit(out.as_deref(), &to_json(&report))?;
            Ok(if report.pass { 0 } else { VERIFY_FAILED })
        }
        Cmd::Report { report, out } => {
            let bytes = read(&report)?;
            let r: RunReport =
                serde_json::from_slice(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", report.display())))?;
            emit(out.as_deref(), &io::summarize(&r))?;
            Ok(0)
        }
        Cmd::Selftest { only, verbose } => {
            if let Some(bad) = only.iter().find(|id| !selftest::CRITERIA.iter().any(|c| c.0 == **id)) {
                return Err(Failure::usage(format!("no criterion {bad}")));
            }
            let mut all = true;
            for (id, ..) in selftest::CRITERIA {
                if !only.is_empty() && !only.contains(&id) {
                    continue;
                }
                let o = selftest::run(id);
                println!("{}", o.line());
                if verbose || !o.pass {
                    for l in &o.log {
                        println!("    {l}");
                    }
                }
                all &= o.pass;
            }
            Ok(if all { 0 } else { VERIFY_FAILED })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("fpf: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
