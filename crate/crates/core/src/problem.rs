//! JSON problem documents and the two QP builders driven by them.
//!
//! Matrices are dense and row-major (`[[row], [row], …]`). Box bounds accept
//! `null` for an absent bound.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bifunction::{self, point};
use crate::error::{Error, Result};
use crate::linalg::{self, from_rows, vstack};
use crate::mpc::{self, Coupling, StageSpec, Terminal};
use crate::para::{close, ParaMorphism};
use crate::qp::{self, FlatQP};
use crate::solver::SolverOptions;

/// Environment variable overriding `max_iter` after the document's overrides.
pub const MAX_ITER_ENV: &str = "BIFUNC_MPC_MAX_ITER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub dynamics: DynamicsSpec,
    pub cost: CostSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSpec>,
    pub horizon: usize,
    pub initial_state: Vec<f64>,
    #[serde(default)]
    pub terminal: TerminalSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub couplings: Vec<CouplingSpec>,
    #[serde(default)]
    pub solver: SolverOverrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(rename = "Qx")]
    pub qx: Vec<Vec<f64>>,
    #[serde(rename = "Ru")]
    pub ru: Vec<Vec<f64>>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lin_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lin_u: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    Box(BoxSpec),
    General(GeneralSpec),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    #[serde(default)]
    pub x_min: Option<Vec<Option<f64>>>,
    #[serde(default)]
    pub x_max: Option<Vec<Option<f64>>>,
    #[serde(default)]
    pub u_min: Option<Vec<Option<f64>>>,
    #[serde(default)]
    pub u_max: Option<Vec<Option<f64>>>,
}

/// `G_in (x; u) ≤ h_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralSpec {
    #[serde(rename = "G_in")]
    pub g_in: Vec<Vec<f64>>,
    pub h_in: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalSpec {
    #[default]
    None,
    Quadratic {
        #[serde(rename = "Qf")]
        qf: Vec<Vec<f64>>,
    },
    Point {
        target: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    /// `x_i = x_j`.
    Equality,
    /// Adds `weight ‖x_i − x_j‖²`.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "type")]
    pub kind: CouplingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polish: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_prim_inf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_dual_inf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_rho: Option<bool>,
}

/// A validated document converted into library types.
#[derive(Debug, Clone)]
pub struct Problem {
    pub stage: StageSpec,
    pub horizon: usize,
    pub x0: DVector<f64>,
    pub terminal: Terminal,
    pub couplings: Vec<CouplingSpec>,
    pub solver: SolverOptions,
}

fn schema<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Schema(msg.into()))
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    let m = from_rows(rows, ncols).map_err(|e| Error::Schema(format!("{name}: {e}")))?;
    if m.nrows() != nrows || m.ncols() != ncols {
        return schema(format!("{name} must be {nrows}x{ncols}, got {}x{}", m.nrows(), m.ncols()));
    }
    if !linalg::all_finite_mat(&m) {
        return schema(format!("{name} has non-finite entries"));
    }
    Ok(m)
}

fn vector(name: &str, v: &[f64], len: usize) -> Result<DVector<f64>> {
    if v.len() != len {
        return schema(format!("{name} must have length {len}, got {}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return schema(format!("{name} has non-finite entries"));
    }
    Ok(DVector::from_column_slice(v))
}

fn bounds(name: &str, v: &Option<Vec<Option<f64>>>, len: usize, absent: f64) -> Result<DVector<f64>> {
    match v {
        None => Ok(DVector::from_element(len, absent)),
        Some(v) if v.len() != len => schema(format!("{name} must have length {len}, got {}", v.len())),
        Some(v) => {
            let out = DVector::from_iterator(len, v.iter().map(|b| b.unwrap_or(absent)));
            if out.iter().any(|x| x.is_nan()) {
                return schema(format!("{name} has NaN entries"));
            }
            Ok(out)
        }
    }
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Validates the document and converts it; no environment lookups.
    pub fn to_problem(&self) -> Result<Problem> {
        let n = self.dynamics.a.len();
        if n == 0 {
            return schema("A must have at least one row");
        }
        let a = matrix("A", &self.dynamics.a, n, n)?;
        let m = self.dynamics.b.first().map_or(0, Vec::len);
        let b = matrix("B", &self.dynamics.b, n, m)?;
        let qx = matrix("Qx", &self.cost.qx, n, n)?;
        let ru = matrix("Ru", &self.cost.ru, m, m)?;

        let mut stage = StageSpec::new(a, b, qx, ru);
        if let Some(c) = &self.dynamics.c {
            stage.c = vector("c", c, n)?;
        }
        if let Some(s) = &self.cost.s {
            stage.s = matrix("S", s, n, m)?;
        }
        if let Some(l) = &self.cost.lin_x {
            stage.lin_x = vector("lin_x", l, n)?;
        }
        if let Some(l) = &self.cost.lin_u {
            stage.lin_u = vector("lin_u", l, m)?;
        }
        match &self.constraints {
            None => {}
            Some(ConstraintSpec::Box(bx)) => {
                let x_min = bounds("x_min", &bx.x_min, n, f64::NEG_INFINITY)?;
                let x_max = bounds("x_max", &bx.x_max, n, f64::INFINITY)?;
                let u_min = bounds("u_min", &bx.u_min, m, f64::NEG_INFINITY)?;
                let u_max = bounds("u_max", &bx.u_max, m, f64::INFINITY)?;
                stage = stage.with_box(&x_min, &x_max, &u_min, &u_max)?;
            }
            Some(ConstraintSpec::General(g)) => {
                stage.g_in = matrix("G_in", &g.g_in, g.g_in.len(), n + m)?;
                stage.h_in = vector("h_in", &g.h_in, g.g_in.len())?;
            }
        }
        stage.validate().map_err(|e| Error::Schema(e.to_string()))?;

        if self.horizon == 0 {
            return schema("horizon must be at least 1");
        }
        let x0 = vector("initial_state", &self.initial_state, n)?;
        let terminal = match &self.terminal {
            TerminalSpec::None => Terminal::None,
            TerminalSpec::Quadratic { qf } => {
                let qf = matrix("Qf", qf, n, n)?;
                linalg::psd_project(&qf).map_err(|e| Error::Schema(format!("Qf: {e}")))?;
                Terminal::Quadratic(qf)
            }
            TerminalSpec::Point { target } => Terminal::Point(vector("target", target, n)?),
        };

        let mut couplings = self.couplings.clone();
        couplings.sort_by_key(|c| (c.i, c.j));
        let mut previous_end = 0;
        for c in &couplings {
            if !(1 <= c.i && c.i < c.j && c.j < self.horizon) {
                return schema(format!(
                    "coupling ({}, {}) must satisfy 1 <= i < j <= horizon-1 = {}",
                    c.i,
                    c.j,
                    self.horizon - 1
                ));
            }
            if c.i < previous_end {
                return schema(format!("coupling ({}, {}) overlaps another coupling", c.i, c.j));
            }
            previous_end = c.j;
            match (c.kind, c.weight) {
                (CouplingKind::Equality, Some(_)) => return schema("equality couplings take no weight"),
                (CouplingKind::Quadratic, Some(w)) if !(w >= 0.0 && w.is_finite()) => {
                    return schema(format!("coupling weight must be finite and nonnegative, got {w}"))
                }
                _ => {}
            }
        }

        let mut solver = SolverOptions::default();
        let o = &self.solver;
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { solver.$f = v; } )* };
        }
        apply!(eps_abs, eps_rel, rho, sigma, max_iter, polish, alpha, eps_prim_inf, eps_dual_inf, adaptive_rho);
        solver.validate().map_err(|e| Error::Schema(e.to_string()))?;

        Ok(Problem { stage, horizon: self.horizon, x0, terminal, couplings, solver })
    }
}

/// Applies [`MAX_ITER_ENV`] to `opts` if set.
pub fn apply_env_overrides(opts: &mut SolverOptions) -> Result<()> {
    if let Ok(v) = std::env::var(MAX_ITER_ENV) {
        let parsed: usize =
            v.trim().parse().map_err(|_| Error::Schema(format!("{MAX_ITER_ENV} must be a positive integer, got {v:?}")))?;
        if parsed == 0 {
            return schema(format!("{MAX_ITER_ENV} must be at least 1"));
        }
        opts.max_iter = parsed;
    }
    Ok(())
}

impl CouplingSpec {
    pub fn weight_or_default(&self) -> f64 {
        self.weight.unwrap_or(1.0)
    }

    pub fn to_coupling(&self, n: usize) -> Result<Coupling> {
        let bifunction = match self.kind {
            CouplingKind::Equality => bifunction::identity(n),
            CouplingKind::Quadratic => mpc::quadratic_coupling(n, self.weight_or_default())?,
        };
        Ok(Coupling { from: self.i, to: self.j, bifunction })
    }
}

impl Problem {
    /// The horizon chain (with couplings) before closing.
    pub fn chain(&self) -> Result<ParaMorphism> {
        let stage = mpc::one_step(&self.stage)?;
        let n = self.stage.state_dim();
        let couplings = self.couplings.iter().map(|c| c.to_coupling(n)).collect::<Result<Vec<_>>>()?;
        mpc::coupled_horizon(&stage, self.horizon, &couplings)
    }

    /// Closed morphism from `x0`.
    pub fn closed_from(&self, x0: &DVector<f64>) -> Result<ParaMorphism> {
        let n = self.stage.state_dim();
        close(&self.chain()?, &point(x0), &self.terminal.to_bifunction(n)?)
    }

    pub fn compositional(&self) -> Result<FlatQP> {
        qp::compile(&self.closed_from(&self.x0)?)
    }

    /// Direct transcription including couplings.
    pub fn monolithic(&self) -> Result<FlatQP> {
        let mut qp = qp::build_monolithic(&self.stage, self.horizon, &self.x0, &self.terminal)?;
        let n = self.stage.state_dim();
        let x_at = |k: usize| self.horizon * self.stage.control_dim() + k * n;
        for c in &self.couplings {
            let (xi, xj) = (x_at(c.i), x_at(c.j));
            match c.kind {
                CouplingKind::Equality => {
                    let mut rows = DMatrix::zeros(n, qp.dim());
                    for r in 0..n {
                        rows[(r, xi + r)] = 1.0;
                        rows[(r, xj + r)] = -1.0;
                    }
                    qp.a_eq = vstack(&qp.a_eq, &rows);
                    qp.b_eq = linalg::vconcat(&qp.b_eq, &DVector::zeros(n));
                }
                CouplingKind::Quadratic => {
                    let w = 2.0 * c.weight_or_default();
                    for r in 0..n {
                        qp.p[(xi + r, xi + r)] += w;
                        qp.p[(xj + r, xj + r)] += w;
                        qp.p[(xi + r, xj + r)] -= w;
                        qp.p[(xj + r, xi + r)] -= w;
                    }
                }
            }
        }
        Ok(qp)
    }
}
