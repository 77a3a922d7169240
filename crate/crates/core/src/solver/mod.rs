//! Embedded operator-splitting QP solver.
//!
//! Problems are brought into the form `minimize ½xᵀPx + qᵀx  s.t.  l ≤ Cx ≤ u`
//! with equality rows encoded as `l = u`. The iteration follows the usual
//! ADMM splitting with a cached dense factorization, Ruiz equilibration,
//! adaptive step size, infeasibility detection from iterate differences, and
//! a final active-set polish on the original data.

mod admm;
mod certificate;
mod polish;
mod riccati;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, vstack};
use crate::qp::FlatQP;

pub use riccati::{riccati_lqr, LqrSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub rho: f64,
    pub sigma: f64,
    pub max_iter: usize,
    pub polish: bool,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub eps_prim_inf: f64,
    pub eps_dual_inf: f64,
    pub adaptive_rho: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            rho: 0.1,
            sigma: 1e-6,
            max_iter: 20_000,
            polish: true,
            alpha: 1.6,
            eps_prim_inf: 1e-5,
            eps_dual_inf: 1e-5,
            adaptive_rho: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps_abs", self.eps_abs),
            ("eps_rel", self.eps_rel),
            ("rho", self.rho),
            ("sigma", self.sigma),
            ("eps_prim_inf", self.eps_prim_inf),
            ("eps_dual_inf", self.eps_dual_inf),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidProblem(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidProblem("max_iter must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidProblem(format!("alpha must lie in (0, 2), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    PrimalInfeasible,
    DualInfeasibleOrUnbounded,
    MaxIter,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::PrimalInfeasible => "primal_infeasible",
            Status::DualInfeasibleOrUnbounded => "unbounded",
            Status::MaxIter => "max_iter",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub z: DVector<f64>,
    /// Multipliers for `[A_eq; A_in]`, inequality multipliers nonnegative.
    pub y_duals: DVector<f64>,
    pub objective: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub iterations: usize,
    pub polished: bool,
    /// Farkas vector over `[A_eq; A_in]` for infeasible problems, or a
    /// recession direction in `z` for unbounded ones.
    pub certificate: Option<DVector<f64>>,
}

/// Constraint data in two-sided form; equality rows have `l = u`.
#[derive(Debug, Clone)]
pub(crate) struct Standard {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub c: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl Standard {
    pub fn from_qp(qp: &FlatQP) -> Self {
        let c = vstack(&qp.a_eq, &qp.a_in);
        let n_eq = qp.a_eq.nrows();
        let m = c.nrows();
        let l = DVector::from_fn(m, |i, _| if i < n_eq { qp.b_eq[i] } else { f64::NEG_INFINITY });
        let u = DVector::from_fn(m, |i, _| if i < n_eq { qp.b_eq[i] } else { qp.b_in[i - n_eq] });
        Standard { p: qp.p.clone(), q: qp.q.clone(), c, l, u }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    /// Unscaled residuals at `(x, y)`: primal `‖Cx − Π(Cx)‖∞`, dual
    /// `‖Px + q + Cᵀy‖∞`.
    pub fn residuals(&self, x: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
        let cx = &self.c * x;
        let proj = DVector::from_fn(cx.len(), |i, _| cx[i].clamp(self.l[i], self.u[i]));
        let prim = inf_norm(&(&cx - proj));
        let dual = inf_norm(&(&self.p * x + &self.q + self.c.transpose() * y));
        (prim, dual)
    }
}

/// Solves `qp`, returning a status rather than an error for infeasible,
/// unbounded or iteration-capped runs.
pub fn solve(qp: &FlatQP, opts: &SolverOptions) -> Result<Solution> {
    opts.validate()?;
    qp.validate()?;
    let std_form = Standard::from_qp(qp);
    let mut sol = solve_standard(&std_form, opts);
    if sol.status == Status::DualInfeasibleOrUnbounded {
        // An infeasible problem takes +∞ even if its objective is unbounded
        // below on a relaxation.
        let feas = Standard {
            p: DMatrix::zeros(std_form.n(), std_form.n()),
            q: DVector::zeros(std_form.n()),
            ..std_form.clone()
        };
        let check = solve_standard(&feas, opts);
        if check.status == Status::PrimalInfeasible {
            sol = check;
        }
    }
    if sol.status == Status::Optimal || sol.status == Status::MaxIter {
        sol.objective = qp.objective(&sol.z);
    } else {
        sol.objective = match sol.status {
            Status::PrimalInfeasible => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
    }
    Ok(sol)
}

fn solve_standard(prob: &Standard, opts: &SolverOptions) -> Solution {
    if prob.n() == 0 {
        return solve_empty(prob);
    }
    let mut sol = admm::run(prob, opts);
    if sol.status == Status::Optimal && opts.polish {
        if let Some((x, y)) = polish::polish(prob, &sol.z, &sol.y_duals, opts) {
            let (prim, dual) = prob.residuals(&x, &y);
            sol.z = x;
            sol.y_duals = y;
            sol.primal_res = prim;
            sol.dual_res = dual;
            sol.polished = true;
        }
    }
    sol
}

fn solve_empty(prob: &Standard) -> Solution {
    let m = prob.m();
    let tol = 1e-9;
    let violated = (0..m).find(|&i| prob.l[i] > tol || prob.u[i] < -tol);
    let mut sol = Solution {
        status: Status::Optimal,
        z: DVector::zeros(0),
        y_duals: DVector::zeros(m),
        objective: 0.0,
        primal_res: 0.0,
        dual_res: 0.0,
        iterations: 0,
        polished: false,
        certificate: None,
    };
    if let Some(i) = violated {
        // 0 = Cx must lie in [l, u]; a single violated row is its own certificate.
        let mut cert = DVector::zeros(m);
        cert[i] = if prob.u[i] < -tol { 1.0 } else { -1.0 };
        sol.status = Status::PrimalInfeasible;
        sol.primal_res = prob.l[i].max(-prob.u[i]);
        sol.certificate = Some(cert);
    }
    sol
}

/// Infinity-norm KKT residuals `(stationarity, primal, complementarity)`.
///
/// The complementarity figure also absorbs any sign violation of the
/// inequality multipliers.
pub fn kkt_residuals(qp: &FlatQP, sol: &Solution) -> (f64, f64, f64) {
    let z = &sol.z;
    let n_eq = qp.a_eq.nrows();
    let y_eq = sol.y_duals.rows(0, n_eq).into_owned();
    let y_in = sol.y_duals.rows(n_eq, qp.a_in.nrows()).into_owned();
    let grad = &qp.p * z + &qp.q + qp.a_eq.transpose() * &y_eq + qp.a_in.transpose() * &y_in;
    let stationarity = inf_norm(&grad);
    let eq_res = inf_norm(&(&qp.a_eq * z - &qp.b_eq));
    let slack = &qp.a_in * z - &qp.b_in;
    let in_res = slack.iter().fold(0.0_f64, |a, &s| a.max(s.max(0.0)));
    let primal = eq_res.max(in_res);
    let complementarity = slack
        .iter()
        .zip(y_in.iter())
        .fold(0.0_f64, |a, (&s, &y)| a.max((y * s).abs()).max((-y).max(0.0)));
    (stationarity, primal, complementarity)
}

/// Checks a Farkas certificate for `A_eq z = b_eq, A_in z ≤ b_in`.
///
/// Returns the certificate residual `‖[A_eq; A_in]ᵀ y‖∞` after normalizing
/// `‖y‖∞ = 1`, provided the sign and support conditions hold.
pub fn farkas_residual(qp: &FlatQP, y: &DVector<f64>) -> Option<f64> {
    let n_eq = qp.a_eq.nrows();
    let scale = inf_norm(y);
    if scale == 0.0 || y.len() != n_eq + qp.a_in.nrows() {
        return None;
    }
    let y = y / scale;
    if y.iter().skip(n_eq).any(|&v| v < -1e-12) {
        return None;
    }
    let support: f64 = (0..y.len())
        .map(|i| if i < n_eq { qp.b_eq[i] * y[i] } else { qp.b_in[i - n_eq] * y[i].max(0.0) })
        .sum();
    if support >= 0.0 {
        return None;
    }
    let c = vstack(&qp.a_eq, &qp.a_in);
    Some(inf_norm(&(c.transpose() * y)))
}
