//! One-step MPC morphisms and the wirings built from them: periodic
//! couplings between distant timesteps and stages assembled from separate
//! cost, dynamics and constraint boxes.

use nalgebra::{DMatrix, DVector};

use crate::bifunction::{self, QuadBifunction};
use crate::error::{Error, Result};
use crate::linalg;
use crate::para::{para_compose, para_power, ParaMorphism, ParamBlock, WireKind};

/// Data of a single stage over state `x ∈ R^n` and control `u ∈ R^m`.
///
/// Dynamics `x⁺ = A x + B u + c`; cost
/// `ℓ(x,u) = xᵀQx x + 2 xᵀS u + uᵀRu u + lin_xᵀx + lin_uᵀu`;
/// constraints `G_in (x; u) ≤ h_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub qx: DMatrix<f64>,
    pub ru: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub lin_x: DVector<f64>,
    pub lin_u: DVector<f64>,
    pub g_in: DMatrix<f64>,
    pub h_in: DVector<f64>,
}

impl StageSpec {
    /// Unconstrained stage with no offset, cross term or linear cost.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, qx: DMatrix<f64>, ru: DMatrix<f64>) -> Self {
        let n = a.nrows();
        let m = b.ncols();
        StageSpec {
            a,
            b,
            c: DVector::zeros(n),
            qx,
            ru,
            s: DMatrix::zeros(n, m),
            lin_x: DVector::zeros(n),
            lin_u: DVector::zeros(m),
            g_in: DMatrix::zeros(0, n + m),
            h_in: DVector::zeros(0),
        }
    }

    /// Appends box constraints; non-finite bounds are skipped.
    pub fn with_box(
        mut self,
        x_min: &DVector<f64>,
        x_max: &DVector<f64>,
        u_min: &DVector<f64>,
        u_max: &DVector<f64>,
    ) -> Result<Self> {
        let n = self.state_dim();
        let m = self.control_dim();
        for (context, v, expected) in
            [("x_min", x_min, n), ("x_max", x_max, n), ("u_min", u_min, m), ("u_max", u_max, m)]
        {
            if v.len() != expected {
                return Err(Error::DimensionMismatch { context, expected, found: v.len() });
            }
        }
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        let bounds = (0..n).map(|i| (i, x_min[i], x_max[i])).chain((0..m).map(|i| (n + i, u_min[i], u_max[i])));
        for (col, lo, hi) in bounds {
            if lo > hi {
                return Err(Error::Schema(format!("box bound {col} has min {lo} > max {hi}")));
            }
            if hi.is_finite() {
                rows.push((col, 1.0, hi));
            }
            if lo.is_finite() {
                rows.push((col, -1.0, -lo));
            }
        }
        let mut g = DMatrix::zeros(rows.len(), n + m);
        let mut h = DVector::zeros(rows.len());
        for (r, &(col, sign, bound)) in rows.iter().enumerate() {
            g[(r, col)] = sign;
            h[r] = bound;
        }
        self.g_in = linalg::vstack(&self.g_in, &g);
        self.h_in = linalg::vconcat(&self.h_in, &h);
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let m = self.control_dim();
        let shapes = [
            ("A cols", self.a.ncols(), n),
            ("B rows", self.b.nrows(), n),
            ("c length", self.c.len(), n),
            ("Qx rows", self.qx.nrows(), n),
            ("Qx cols", self.qx.ncols(), n),
            ("Ru rows", self.ru.nrows(), m),
            ("Ru cols", self.ru.ncols(), m),
            ("S rows", self.s.nrows(), n),
            ("S cols", self.s.ncols(), m),
            ("lin_x length", self.lin_x.len(), n),
            ("lin_u length", self.lin_u.len(), m),
            ("G_in cols", self.g_in.ncols(), n + m),
            ("h_in length", self.h_in.len(), self.g_in.nrows()),
        ];
        for (context, found, expected) in shapes {
            if found != expected {
                return Err(Error::DimensionMismatch { context, expected, found });
            }
        }
        let all = [&self.a, &self.b, &self.qx, &self.ru, &self.s, &self.g_in];
        let vecs = [&self.c, &self.lin_x, &self.lin_u, &self.h_in];
        if !all.iter().all(|m| linalg::all_finite_mat(m)) || !vecs.iter().all(|v| linalg::all_finite_vec(v)) {
            return Err(Error::InvalidProblem("non-finite entry in stage data".into()));
        }
        linalg::psd_project(&self.cost_blocks_xu().0)?;
        Ok(())
    }

    /// `(P, q)` with `ℓ(x,u) = ½ (x;u)ᵀ P (x;u) + qᵀ(x;u)`.
    pub fn cost_blocks_xu(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.state_dim();
        let m = self.control_dim();
        let mut p = DMatrix::zeros(n + m, n + m);
        p.view_mut((0, 0), (n, n)).copy_from(&(&self.qx * 2.0));
        p.view_mut((n, n), (m, m)).copy_from(&(&self.ru * 2.0));
        p.view_mut((0, n), (n, m)).copy_from(&(&self.s * 2.0));
        p.view_mut((n, 0), (m, n)).copy_from(&(self.s.transpose() * 2.0));
        (p, linalg::vconcat(&self.lin_x, &self.lin_u))
    }

    /// Permutation taking `(u; x)` positions to `(x; u)` positions.
    fn ux_to_xu(&self) -> Vec<usize> {
        let n = self.state_dim();
        let m = self.control_dim();
        (0..m).map(|i| n + i).chain(0..n).collect()
    }

    /// The three component boxes of a stage over the input `(u; x)`:
    /// cost `(u;x) ↛ R^0`, dynamics `(u;x) ↛ x⁺`, constraint `(u;x) ↛ R^0`.
    pub fn components(&self) -> Result<(QuadBifunction, QuadBifunction, QuadBifunction)> {
        self.validate()?;
        let n = self.state_dim();
        let m = self.control_dim();
        let k = n + m;
        let perm = self.ux_to_xu();
        let (p_xu, q_xu) = self.cost_blocks_xu();
        let p = DMatrix::from_fn(k, k, |i, j| p_xu[(perm[i], perm[j])]);
        let q = DVector::from_fn(k, |i, _| q_xu[perm[i]]);
        let cost = bifunction::quadratic_cost(&p, &q, 0.0, (k, 0))?;

        let mut map = DMatrix::zeros(n, k);
        map.view_mut((0, 0), (n, m)).copy_from(&self.b);
        map.view_mut((0, m), (n, n)).copy_from(&self.a);
        let dynamics = bifunction::from_linear_map(&map, Some(&self.c))?;

        let g = DMatrix::from_fn(self.g_in.nrows(), k, |r, j| self.g_in[(r, perm[j])]);
        let constraint = bifunction::polyhedral_constraint(&g, &self.h_in, &DMatrix::zeros(0, k), &DVector::zeros(0), (k, 0))?;
        Ok((cost, dynamics, constraint))
    }
}

/// Terminal cost or constraint on the final state.
#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    None,
    /// Adds `x_Nᵀ Q_f x_N`.
    Quadratic(DMatrix<f64>),
    /// Requires `x_N = target`.
    Point(DVector<f64>),
}

impl Terminal {
    pub fn to_bifunction(&self, n: usize) -> Result<QuadBifunction> {
        match self {
            Terminal::None => Ok(bifunction::zero(n, 0)),
            Terminal::Quadratic(qf) => bifunction::quadratic_cost(&(qf * 2.0), &DVector::zeros(n), 0.0, (n, 0)),
            Terminal::Point(target) => {
                if target.len() != n {
                    return Err(Error::DimensionMismatch { context: "terminal target", expected: n, found: target.len() });
                }
                bifunction::polyhedral_constraint(
                    &DMatrix::zeros(0, n),
                    &DVector::zeros(0),
                    &DMatrix::identity(n, n),
                    target,
                    (n, 0),
                )
            }
        }
    }
}

/// `(U, G)` with `G((u, x), x') = ℓ(x,u) + δ(x' | Ax + Bu + c) + δ(G_in(x;u) ≤ h_in)`.
pub fn one_step(spec: &StageSpec) -> Result<ParaMorphism> {
    let (cost, dynamics, constraint) = spec.components()?;
    let n = spec.state_dim();
    let k = n + spec.control_dim();
    // Widen the output-free pieces to the (u; x) ↛ x' signature.
    let widen = |f: &QuadBifunction| -> Result<QuadBifunction> {
        let dim = k + n;
        let mut p = DMatrix::zeros(dim, dim);
        p.view_mut((0, 0), (k, k)).copy_from(f.p());
        let q = linalg::vconcat(f.q(), &DVector::zeros(n));
        let pad = |a: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(a.nrows(), dim);
            out.view_mut((0, 0), (a.nrows(), k)).copy_from(a);
            out
        };
        QuadBifunction::new(k, n, Vec::new(), p, q, f.r(), pad(f.a_eq()), f.b_eq().clone(), pad(f.a_in()), f.b_in().clone())
    };
    let body = bifunction::add(&bifunction::add(&widen(&cost)?, &dynamics)?, &widen(&constraint)?)?;
    ParaMorphism::new(vec![ParamBlock { step: 0, dim: spec.control_dim() }], body, 1)
}

/// Fills a stage box from separate cost, dynamics and constraint boxes by
/// copying the `(u; x)` wire to each of them.
pub fn assemble_stage(
    cost: &QuadBifunction,
    dynamics: &QuadBifunction,
    constraint: &QuadBifunction,
) -> Result<ParaMorphism> {
    let k = dynamics.n_in();
    let n = dynamics.n_out();
    if n > k {
        return Err(Error::DimensionMismatch { context: "dynamics input (u; x)", expected: n, found: k });
    }
    for (context, f) in [("cost", cost), ("constraint", constraint)] {
        if f.n_in() != k {
            return Err(Error::DimensionMismatch { context, expected: k, found: f.n_in() });
        }
        if f.n_out() != 0 {
            return Err(Error::DimensionMismatch { context, expected: 0, found: f.n_out() });
        }
    }
    let fan_out = bifunction::compose(
        &bifunction::oplus(&bifunction::identity(k), &bifunction::dup(k)),
        &bifunction::dup(k),
    )?;
    let boxes = bifunction::oplus(&bifunction::oplus(cost, constraint), dynamics);
    let body = bifunction::compose(&boxes, &fan_out)?;
    ParaMorphism::new(vec![ParamBlock { step: 0, dim: k - n }], body, 1)
}

/// The stage run beside a carried copy of the state: `(U, carry ⊕ X) → carry ⊕ X`.
fn carried(stage: &ParaMorphism) -> Result<ParaMorphism> {
    let n = stage.domain_dim();
    let m = stage.param_dim();
    // (u, carry, x) → (carry, u, x) → (carry, x')
    let reorder = bifunction::oplus(&bifunction::swap(m, n), &bifunction::identity(n));
    let beside = bifunction::oplus(&bifunction::identity(n), stage.body());
    let body = bifunction::compose(&beside, &reorder)?;
    let kinds = std::iter::repeat_n(WireKind::Aux, n).chain(std::iter::repeat_n(WireKind::State, n)).collect();
    ParaMorphism::new(stage.param_ledger().to_vec(), body, stage.steps())?.with_codomain_kinds(kinds)
}

/// Horizon-`horizon` chain of `stage` in which the state after `i` steps is
/// copied, carried beside steps `i+1 … j`, passed through `coupling`, and
/// merged back into the state after `j` steps.
pub fn periodic_constraint(
    stage: &ParaMorphism,
    horizon: usize,
    i: usize,
    j: usize,
    coupling: &QuadBifunction,
) -> Result<ParaMorphism> {
    coupled_horizon(stage, horizon, &[Coupling { from: i, to: j, bifunction: coupling.clone() }])
}

/// A cross-timestep term between the states after `from` and `to` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub from: usize,
    pub to: usize,
    pub bifunction: QuadBifunction,
}

/// [`periodic_constraint`] for several couplings whose step intervals do
/// not overlap (one may end where the next begins).
pub fn coupled_horizon(stage: &ParaMorphism, horizon: usize, couplings: &[Coupling]) -> Result<ParaMorphism> {
    let n = stage.domain_dim();
    if stage.codomain_dim() != n {
        return Err(Error::NotEndomorphism { domain: n, codomain: stage.codomain_dim() });
    }
    if horizon == 0 {
        return Err(Error::IndexOutOfRange("horizon must be at least 1".into()));
    }
    let mut previous_end = 0;
    for c in couplings {
        let (i, j) = (c.from, c.to);
        if !(1 <= i && i < j && j < horizon) {
            return Err(Error::IndexOutOfRange(format!(
                "coupling indices must satisfy 1 <= i < j <= N-1, got i={i}, j={j}, N={horizon}"
            )));
        }
        if i < previous_end {
            return Err(Error::IndexOutOfRange(format!(
                "coupling ({i}, {j}) overlaps a previous coupling ending at {previous_end}"
            )));
        }
        if c.bifunction.n_in() != n || c.bifunction.n_out() != n {
            return Err(Error::DimensionMismatch { context: "coupling bifunction", expected: n, found: c.bifunction.n_in() });
        }
        previous_end = j;
    }
    let aux = |k: usize| vec![WireKind::Aux; k];
    let beside = carried(stage)?;
    let split = ParaMorphism::lift(bifunction::dup(n)).with_codomain_kinds(aux(2 * n))?;
    let join = ParaMorphism::lift(bifunction::merge(n));

    if couplings.is_empty() {
        return para_power(stage, horizon);
    }
    let advance = |chain: ParaMorphism, m: &ParaMorphism, count: usize| -> Result<ParaMorphism> {
        (0..count).try_fold(chain, |acc, _| para_compose(m, &acc))
    };
    // Every coupling starts after at least one step, so the chain never
    // needs an identity seed (which would label the initial state twice).
    let mut chain = stage.clone();
    let mut done = 1;
    for c in couplings {
        chain = advance(chain, stage, c.from - done)?;
        chain = para_compose(&split, &chain)?;
        chain = advance(chain, &beside, c.to - c.from)?;
        let couple = ParaMorphism::lift(bifunction::oplus(&c.bifunction, &bifunction::identity(n)))
            .with_codomain_kinds(aux(2 * n))?;
        chain = para_compose(&couple, &chain)?;
        chain = para_compose(&join, &chain)?;
        done = c.to;
    }
    advance(chain, stage, horizon - done)
}

/// `w‖a − b‖²` as a bifunction `X ↛ X`.
pub fn quadratic_coupling(n: usize, weight: f64) -> Result<QuadBifunction> {
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        p[(i, i)] = 2.0 * weight;
        p[(n + i, n + i)] = 2.0 * weight;
        p[(i, n + i)] = -2.0 * weight;
        p[(n + i, i)] = -2.0 * weight;
    }
    bifunction::quadratic_cost(&p, &DVector::zeros(2 * n), 0.0, (n, n))
}
