//! `bifunc-mpc solve|simulate|export <spec.json> [flags]`.
//!
//! Reports are line-oriented `key = value`. Exit codes: 0 success, 1 schema
//! or input error, 2 infeasible, 3 unbounded, 4 iteration limit.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use crate::diagram;
use crate::error::{Error, Result};
use crate::problem::{apply_env_overrides, Problem, ProblemSpec};
use crate::qp::FlatQP;
use crate::sim::{self, fmt_num};
use crate::solver::{self, Solution, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_UNBOUNDED: i32 = 3;
pub const EXIT_MAX_ITER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "bifunc-mpc", version, about = "Compositional MPC over convex bifunctions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the horizon QP compositionally and solve it.
    Solve {
        spec: PathBuf,
        /// Also solve the directly transcribed QP and report the gap.
        #[arg(long)]
        oracle: bool,
    },
    /// Run the receding-horizon loop and write a CSV log.
    Simulate {
        spec: PathBuf,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the compiled QP as JSON and/or the wiring diagram as DOT.
    Export {
        spec: PathBuf,
        #[arg(long)]
        qp: Option<PathBuf>,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
}

pub fn status_exit_code(status: Status) -> i32 {
    match status {
        Status::Optimal => EXIT_OK,
        Status::PrimalInfeasible => EXIT_INFEASIBLE,
        Status::DualInfeasibleOrUnbounded => EXIT_UNBOUNDED,
        Status::MaxIter => EXIT_MAX_ITER,
    }
}

fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::SolverMaxIter { .. } => EXIT_MAX_ITER,
        _ => EXIT_SCHEMA,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_SCHEMA;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let result = match &cli.command {
        Command::Solve { spec, oracle } => cmd_solve(spec, *oracle, out),
        Command::Simulate { spec, steps, out: path } => cmd_simulate(spec, *steps, path, out),
        Command::Export { spec, qp, dot } => cmd_export(spec, qp.as_deref(), dot.as_deref(), out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            error_exit_code(&e)
        }
    }
}

pub fn load(path: &Path) -> Result<Problem> {
    let mut problem = ProblemSpec::from_file(path)?.to_problem()?;
    apply_env_overrides(&mut problem.solver)?;
    Ok(problem)
}

fn join(v: &DVector<f64>) -> String {
    v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(", ")
}

macro_rules! line {
    ($out:expr, $key:expr, $($val:tt)*) => {
        writeln!($out, "{} = {}", $key, format!($($val)*)).map_err(Error::from)
    };
}

fn report_solution(qp: &FlatQP, sol: &Solution, out: &mut dyn Write) -> Result<()> {
    line!(out, "status", "{}", sol.status)?;
    if sol.status != Status::Optimal {
        line!(out, "iterations", "{}", sol.iterations)?;
        return Ok(());
    }
    line!(out, "objective", "{}", fmt_num(sol.objective))?;
    line!(out, "iterations", "{}", sol.iterations)?;
    line!(out, "polished", "{}", sol.polished)?;
    line!(out, "primal_residual", "{}", fmt_num(sol.primal_res))?;
    line!(out, "dual_residual", "{}", fmt_num(sol.dual_res))?;
    for (k, u) in qp.controls(&sol.z) {
        line!(out, format!("u[{k}]"), "{}", join(&u))?;
    }
    for (k, x) in qp.states(&sol.z) {
        line!(out, format!("x[{k}]"), "{}", join(&x))?;
    }
    Ok(())
}

pub fn cmd_solve(spec: &Path, oracle: bool, out: &mut dyn Write) -> Result<i32> {
    let problem = load(spec)?;
    let qp = problem.compositional()?;
    let sol = solver::solve(&qp, &problem.solver)?;
    report_solution(&qp, &sol, out)?;
    if oracle {
        let mono = problem.monolithic()?;
        let reference = solver::solve(&mono, &problem.solver)?;
        line!(out, "oracle_status", "{}", reference.status)?;
        if reference.status == Status::Optimal {
            line!(out, "oracle_objective", "{}", fmt_num(reference.objective))?;
        }
        if sol.status == Status::Optimal && reference.status == Status::Optimal {
            let gap = (sol.objective - reference.objective).abs() / reference.objective.abs().max(1.0);
            line!(out, "oracle_gap", "{}", fmt_num(gap))?;
            let ours = qp.controls(&sol.z);
            let theirs = mono.controls(&reference.z);
            let control_gap = ours
                .iter()
                .zip(&theirs)
                .map(|((_, a), (_, b))| (a - b).amax())
                .fold(0.0, f64::max);
            line!(out, "oracle_control_gap", "{}", fmt_num(control_gap))?;
        }
        line!(out, "oracle_status_match", "{}", reference.status == sol.status)?;
    }
    Ok(status_exit_code(sol.status))
}

pub fn cmd_simulate(spec: &Path, steps: usize, csv: &Path, out: &mut dyn Write) -> Result<i32> {
    let problem = load(spec)?;
    let log = sim::simulate_problem(&problem, steps)?;
    std::fs::write(csv, log.to_csv()).map_err(|e| Error::Io(format!("{}: {e}", csv.display())))?;
    let last = log.records.last().map_or(Status::Optimal, |r| r.status);
    line!(out, "steps", "{}", log.records.len())?;
    line!(out, "requested_steps", "{}", log.requested_steps)?;
    line!(out, "status", "{last}")?;
    line!(out, "initial_state_norm", "{}", fmt_num(problem.x0.norm()))?;
    line!(out, "final_state_norm", "{}", fmt_num(log.final_state.norm()))?;
    line!(out, "worst_violation", "{}", fmt_num(log.worst_violation()))?;
    line!(out, "total_solve_time_ms", "{}", fmt_num(log.total_time_ms()))?;
    line!(out, "csv", "{}", csv.display())?;
    Ok(status_exit_code(last))
}

pub fn cmd_export(spec: &Path, qp_path: Option<&Path>, dot_path: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    if qp_path.is_none() && dot_path.is_none() {
        return Err(Error::Schema("export needs --qp and/or --dot".into()));
    }
    let problem = load(spec)?;
    if let Some(path) = qp_path {
        let qp = problem.compositional()?;
        std::fs::write(path, qp.to_json()?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        line!(out, "qp", "{}", path.display())?;
        line!(out, "variables", "{}", qp.dim())?;
    }
    if let Some(path) = dot_path {
        std::fs::write(path, diagram::to_dot(&problem)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        line!(out, "dot", "{}", path.display())?;
    }
    Ok(EXIT_OK)
}
