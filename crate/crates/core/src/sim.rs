//! Receding-horizon closed loop: solve from the current state, apply the
//! first control, advance the nominal plant, repeat.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DVector;

use crate::bifunction::point;
use crate::error::{Error, Result};
use crate::mpc::{one_step, StageSpec, Terminal};
use crate::para::{close, para_power};
use crate::problem::Problem;
use crate::qp::{compile, FlatQP};
use crate::solver::{self, SolverOptions, Status};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: DVector<f64>,
    /// `None` when the solve at this step did not return an optimum.
    pub u: Option<DVector<f64>>,
    pub objective: f64,
    pub status: Status,
    pub iterations: usize,
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<StepRecord>,
    pub stage: StageSpec,
    pub horizon: usize,
    pub requested_steps: usize,
    /// Plant state after the last applied control.
    pub final_state: DVector<f64>,
}

impl TrajectoryLog {
    pub fn terminated_early(&self) -> bool {
        self.records.last().is_some_and(|r| r.status != Status::Optimal)
    }

    pub fn all_optimal(&self) -> bool {
        self.records.iter().all(|r| r.status == Status::Optimal)
    }

    pub fn total_time_ms(&self) -> f64 {
        self.records.iter().map(|r| r.time_ms).sum()
    }

    /// Largest `G_in (x_k; u_k) − h_in` over records with an applied control,
    /// clipped at zero.
    pub fn worst_violation(&self) -> f64 {
        let s = &self.stage;
        let mut worst: f64 = 0.0;
        for r in &self.records {
            let Some(u) = &r.u else { continue };
            let xu = crate::linalg::vconcat(&r.x, u);
            let slack = &s.g_in * xu - &s.h_in;
            worst = slack.iter().fold(worst, |w, &v| w.max(v));
        }
        worst
    }

    pub fn plant(&self) -> String {
        format!(
            "x+ = A x + B u + c with n = {}, m = {}",
            self.stage.state_dim(),
            self.stage.control_dim()
        )
    }

    pub fn to_csv(&self) -> String {
        let n = self.stage.state_dim();
        let m = self.stage.control_dim();
        let mut out = String::from("k");
        for i in 1..=n {
            let _ = write!(out, ",x_{i}");
        }
        for i in 1..=m {
            let _ = write!(out, ",u_{i}");
        }
        out.push_str(",objective,status,iters,time_ms\n");
        for r in &self.records {
            let _ = write!(out, "{}", r.k);
            for v in r.x.iter() {
                let _ = write!(out, ",{}", fmt_num(*v));
            }
            for i in 0..m {
                let v = r.u.as_ref().map_or(f64::NAN, |u| u[i]);
                let _ = write!(out, ",{}", fmt_num(v));
            }
            let _ = writeln!(
                out,
                ",{},{},{},{}",
                fmt_num(r.objective),
                r.status,
                r.iterations,
                fmt_num(r.time_ms)
            );
        }
        out
    }
}

/// Seventeen significant digits; `nan`, `inf` and `-inf` for specials.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// One plant step.
pub fn plant_step(spec: &StageSpec, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    &spec.a * x + &spec.b * u + &spec.c
}

pub fn simulate(
    spec: &StageSpec,
    horizon: usize,
    x0: &DVector<f64>,
    steps: usize,
    terminal: &Terminal,
    opts: &SolverOptions,
) -> Result<TrajectoryLog> {
    let chain = para_power(&one_step(spec)?, horizon)?;
    let term = terminal.to_bifunction(spec.state_dim())?;
    run(spec, horizon, x0, steps, opts, |x| compile(&close(&chain, &point(x), &term)?))
}

/// [`simulate`] for a parsed problem, couplings included.
pub fn simulate_problem(problem: &Problem, steps: usize) -> Result<TrajectoryLog> {
    let chain = problem.chain()?;
    let term = problem.terminal.to_bifunction(problem.stage.state_dim())?;
    run(&problem.stage, problem.horizon, &problem.x0, steps, &problem.solver, |x| {
        compile(&close(&chain, &point(x), &term)?)
    })
}

fn run(
    spec: &StageSpec,
    horizon: usize,
    x0: &DVector<f64>,
    steps: usize,
    opts: &SolverOptions,
    build: impl Fn(&DVector<f64>) -> Result<FlatQP>,
) -> Result<TrajectoryLog> {
    if steps == 0 {
        return Err(Error::IndexOutOfRange("steps must be at least 1".into()));
    }
    spec.validate()?;
    if x0.len() != spec.state_dim() {
        return Err(Error::DimensionMismatch { context: "initial state", expected: spec.state_dim(), found: x0.len() });
    }
    let mut x = x0.clone();
    let mut records = Vec::with_capacity(steps);
    for k in 0..steps {
        let start = Instant::now();
        let qp = build(&x)?;
        let sol = solver::solve(&qp, opts)?;
        let time_ms = start.elapsed().as_secs_f64() * 1e3;
        let u = if sol.status == Status::Optimal { qp.control_at(&sol.z, 0) } else { None };
        let objective = match sol.status {
            Status::Optimal => sol.objective,
            Status::PrimalInfeasible => f64::INFINITY,
            Status::DualInfeasibleOrUnbounded => f64::NEG_INFINITY,
            Status::MaxIter => f64::NAN,
        };
        records.push(StepRecord { k, x: x.clone(), u: u.clone(), objective, status: sol.status, iterations: sol.iterations, time_ms });
        match u {
            Some(u) => x = plant_step(spec, &x, &u),
            None => break,
        }
    }
    Ok(TrajectoryLog { records, stage: spec.clone(), horizon, requested_steps: steps, final_state: x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar(bound: f64) -> StageSpec {
        let one = DMatrix::from_element(1, 1, 1.0);
        StageSpec::new(one.clone(), one.clone(), one.clone(), one)
            .with_box(
                &DVector::from_element(1, -bound),
                &DVector::from_element(1, bound),
                &DVector::from_element(1, -bound),
                &DVector::from_element(1, bound),
            )
            .unwrap()
    }

    #[test]
    fn plant_recursion_is_exact() {
        let s = scalar(5.0);
        let log = simulate(&s, 3, &DVector::from_element(1, 2.0), 6, &Terminal::None, &SolverOptions::default()).unwrap();
        assert_eq!(log.records.len(), 6);
        assert!(log.all_optimal());
        for w in log.records.windows(2) {
            assert_eq!(w[1].x, plant_step(&s, &w[0].x, w[0].u.as_ref().unwrap()));
        }
    }

    #[test]
    fn infeasible_start_stops_after_one_record() {
        let log = simulate(&scalar(1.0), 3, &DVector::from_element(1, 4.0), 10, &Terminal::None, &SolverOptions::default())
            .unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.records[0].status, Status::PrimalInfeasible);
        assert!(log.terminated_early());
        let csv = log.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().contains(",nan,inf,primal_infeasible,"));
    }

    #[test]
    fn csv_header_and_digits() {
        let log = simulate(&scalar(5.0), 2, &DVector::from_element(1, 1.0), 1, &Terminal::None, &SolverOptions::default())
            .unwrap();
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "k,x_1,u_1,objective,status,iters,time_ms");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[1], "1.0000000000000000e0");
        let u: f64 = row[2].parse().unwrap();
        assert_eq!(fmt_num(u), row[2]);
    }

    #[test]
    fn zero_steps_rejected() {
        let r = simulate(&scalar(1.0), 2, &DVector::zeros(1), 0, &Terminal::None, &SolverOptions::default());
        assert!(r.is_err());
    }
}
