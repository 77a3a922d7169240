//! Convex bifunctions in the quadratic/polyhedral fragment.
//!
//! A [`QuadBifunction`] `F: R^m ↛ R^n` stores a QP over the stacked vector
//! `z = (u; x; w)` of inputs, outputs and latents:
//!
//! ```text
//! F(u, x) = inf_w ½ zᵀPz + qᵀz + r   s.t.  A_eq z = b_eq,  A_in z ≤ b_in
//! ```
//!
//! Composition identifies one morphism's output with the next one's input
//! and moves that shared block into the latents, so every composite stays
//! in the fragment and can be evaluated or compiled exactly.

use std::fmt;
use std::ops::Add;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, scatter_cols, scatter_sym, scatter_vec, vconcat, vstack};
use crate::qp::FlatQP;
use crate::solver::{self, SolverOptions, Status};

/// Value of a bifunction at a point of `R^m × R^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedValue {
    Finite(f64),
    PlusInfinity,
    MinusInfinity,
}

impl ExtendedValue {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedValue::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedValue::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Same tag, and finite payloads within `tol` (absolute, relaxed
    /// relatively for large magnitudes).
    pub fn approx_eq(self, other: ExtendedValue, tol: f64) -> bool {
        match (self, other) {
            (ExtendedValue::Finite(a), ExtendedValue::Finite(b)) => {
                (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
            }
            (a, b) => std::mem::discriminant(&a) == std::mem::discriminant(&b),
        }
    }
}

/// `+∞` absorbs everything, including `−∞`.
impl Add for ExtendedValue {
    type Output = ExtendedValue;

    fn add(self, rhs: ExtendedValue) -> ExtendedValue {
        use ExtendedValue::*;
        match (self, rhs) {
            (PlusInfinity, _) | (_, PlusInfinity) => PlusInfinity,
            (MinusInfinity, _) | (_, MinusInfinity) => MinusInfinity,
            (Finite(a), Finite(b)) => Finite(a + b),
        }
    }
}

impl fmt::Display for ExtendedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedValue::Finite(v) => write!(f, "{v}"),
            ExtendedValue::PlusInfinity => f.write_str("+inf"),
            ExtendedValue::MinusInfinity => f.write_str("-inf"),
        }
    }
}

/// Provenance of a latent coordinate, recorded when composition creates it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatentTag {
    /// The state after `k` stage applications.
    State(usize),
    /// A copy of the control of timestep `k` routed through an identity.
    ControlCopy(usize),
    Aux,
}

impl LatentTag {
    pub fn shifted(self, by: usize) -> LatentTag {
        match self {
            LatentTag::State(k) => LatentTag::State(k + by),
            LatentTag::ControlCopy(k) => LatentTag::ControlCopy(k + by),
            LatentTag::Aux => LatentTag::Aux,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadBifunction {
    n_in: usize,
    n_out: usize,
    p: DMatrix<f64>,
    q: DVector<f64>,
    r: f64,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    a_in: DMatrix<f64>,
    b_in: DVector<f64>,
    latent_tags: Vec<LatentTag>,
}

fn dim_check(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, found })
    }
}

impl QuadBifunction {
    /// Builds a bifunction from raw blocks, checking dimensions and
    /// projecting `P` onto the PSD cone within tolerance.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_in: usize,
        n_out: usize,
        latent_tags: Vec<LatentTag>,
        p: DMatrix<f64>,
        q: DVector<f64>,
        r: f64,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Result<Self> {
        let dim = n_in + n_out + latent_tags.len();
        dim_check("P rows", dim, p.nrows())?;
        dim_check("q length", dim, q.len())?;
        dim_check("A_eq cols", dim, a_eq.ncols())?;
        dim_check("b_eq length", a_eq.nrows(), b_eq.len())?;
        dim_check("A_in cols", dim, a_in.ncols())?;
        dim_check("b_in length", a_in.nrows(), b_in.len())?;
        let p = linalg::psd_project(&p)?;
        Ok(QuadBifunction { n_in, n_out, p, q, r, a_eq, b_eq, a_in, b_in, latent_tags })
    }

    /// Internal constructor for blocks already known to be consistent.
    #[allow(clippy::too_many_arguments)]
    fn assembled(
        n_in: usize,
        n_out: usize,
        latent_tags: Vec<LatentTag>,
        p: DMatrix<f64>,
        q: DVector<f64>,
        r: f64,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Self {
        debug_assert_eq!(p.nrows(), n_in + n_out + latent_tags.len());
        QuadBifunction { n_in, n_out, p, q, r, a_eq, b_eq, a_in, b_in, latent_tags }
    }

    fn indicator(n_in: usize, n_out: usize, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Self {
        let dim = n_in + n_out;
        Self::assembled(
            n_in,
            n_out,
            Vec::new(),
            DMatrix::zeros(dim, dim),
            DVector::zeros(dim),
            0.0,
            a_eq,
            b_eq,
            DMatrix::zeros(0, dim),
            DVector::zeros(0),
        )
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn n_lat(&self) -> usize {
        self.latent_tags.len()
    }

    pub fn dim(&self) -> usize {
        self.n_in + self.n_out + self.n_lat()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn a_eq(&self) -> &DMatrix<f64> {
        &self.a_eq
    }

    pub fn b_eq(&self) -> &DVector<f64> {
        &self.b_eq
    }

    pub fn a_in(&self) -> &DMatrix<f64> {
        &self.a_in
    }

    pub fn b_in(&self) -> &DVector<f64> {
        &self.b_in
    }

    pub fn latent_tags(&self) -> &[LatentTag] {
        &self.latent_tags
    }

    /// Copy with every step-indexed latent tag advanced by `steps`.
    pub fn shift_tags(&self, steps: usize) -> Self {
        let mut out = self.clone();
        for t in &mut out.latent_tags {
            *t = t.shifted(steps);
        }
        out
    }

    /// Same bifunction read through a variable relabelling: the variable
    /// at column `j` of `self` lands at column `map[j]` of a problem with
    /// `total` columns.
    fn scattered(&self, map: &[usize], total: usize) -> Blocks {
        Blocks {
            p: scatter_sym(&self.p, map, total),
            q: scatter_vec(&self.q, map, total),
            r: self.r,
            a_eq: scatter_cols(&self.a_eq, map, total),
            b_eq: self.b_eq.clone(),
            a_in: scatter_cols(&self.a_in, map, total),
            b_in: self.b_in.clone(),
        }
    }
}

/// Objective and constraint blocks over a shared variable vector.
struct Blocks {
    p: DMatrix<f64>,
    q: DVector<f64>,
    r: f64,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    a_in: DMatrix<f64>,
    b_in: DVector<f64>,
}

impl Blocks {
    /// Pointwise sum: objectives add, constraints stack.
    fn sum(self, other: Blocks) -> Blocks {
        Blocks {
            p: self.p + other.p,
            q: self.q + other.q,
            r: self.r + other.r,
            a_eq: vstack(&self.a_eq, &other.a_eq),
            b_eq: vconcat(&self.b_eq, &other.b_eq),
            a_in: vstack(&self.a_in, &other.a_in),
            b_in: vconcat(&self.b_in, &other.b_in),
        }
    }

    fn into_bifunction(self, n_in: usize, n_out: usize, tags: Vec<LatentTag>) -> QuadBifunction {
        QuadBifunction::assembled(
            n_in, n_out, tags, self.p, self.q, self.r, self.a_eq, self.b_eq, self.a_in, self.b_in,
        )
    }
}

/// `id_X`: value 0 iff output equals input.
pub fn identity(n: usize) -> QuadBifunction {
    let mut a = DMatrix::zeros(n, 2 * n);
    for i in 0..n {
        a[(i, i)] = 1.0;
        a[(i, n + i)] = -1.0;
    }
    QuadBifunction::indicator(n, n, a, DVector::zeros(n))
}

/// The monoidal unit `id_{R^0}`.
pub fn unit() -> QuadBifunction {
    identity(0)
}

/// The bifunction that is 0 everywhere on `R^m × R^n`.
pub fn zero(n_in: usize, n_out: usize) -> QuadBifunction {
    QuadBifunction::indicator(n_in, n_out, DMatrix::zeros(0, n_in + n_out), DVector::zeros(0))
}

/// Composite `G ∘ F` with the interface latents tagged [`LatentTag::Aux`].
pub fn compose(g: &QuadBifunction, f: &QuadBifunction) -> Result<QuadBifunction> {
    let tags = vec![LatentTag::Aux; f.n_out];
    compose_tagged(g, f, &tags)
}

/// Composite `G ∘ F`, `(G∘F)(u, y) = inf_x F(u, x) + G(x, y)`.
///
/// Variables of the result are ordered `(F inputs; G outputs; F latents;
/// G latents; interface)`, the interface block carrying `interface_tags`.
pub fn compose_tagged(
    g: &QuadBifunction,
    f: &QuadBifunction,
    interface_tags: &[LatentTag],
) -> Result<QuadBifunction> {
    dim_check("compose interface", f.n_out, g.n_in)?;
    dim_check("interface tags", f.n_out, interface_tags.len())?;
    let n_in = f.n_in;
    let n_out = g.n_out;
    let f_lat = n_in + n_out;
    let g_lat = f_lat + f.n_lat();
    let iface = g_lat + g.n_lat();
    let total = iface + f.n_out;

    let f_map: Vec<usize> = (0..f.n_in)
        .chain((0..f.n_out).map(|i| iface + i))
        .chain((0..f.n_lat()).map(|i| f_lat + i))
        .collect();
    let g_map: Vec<usize> = (0..g.n_in)
        .map(|i| iface + i)
        .chain((0..g.n_out).map(|i| n_in + i))
        .chain((0..g.n_lat()).map(|i| g_lat + i))
        .collect();

    let tags: Vec<LatentTag> = f
        .latent_tags
        .iter()
        .chain(g.latent_tags.iter())
        .chain(interface_tags.iter())
        .copied()
        .collect();
    let blocks = f.scattered(&f_map, total).sum(g.scattered(&g_map, total));
    Ok(blocks.into_bifunction(n_in, n_out, tags))
}

/// Direct sum `F ⊕ G`, `(F⊕G)((u,y),(x,z)) = F(u,x) + G(y,z)`.
///
/// Variables are ordered `(F in; G in; F out; G out; F latents; G latents)`.
pub fn oplus(f: &QuadBifunction, g: &QuadBifunction) -> QuadBifunction {
    let n_in = f.n_in + g.n_in;
    let n_out = f.n_out + g.n_out;
    let lat = n_in + n_out;
    let total = lat + f.n_lat() + g.n_lat();

    let f_map: Vec<usize> = (0..f.n_in)
        .chain((0..f.n_out).map(|i| n_in + i))
        .chain((0..f.n_lat()).map(|i| lat + i))
        .collect();
    let g_map: Vec<usize> = (0..g.n_in)
        .map(|i| f.n_in + i)
        .chain((0..g.n_out).map(|i| n_in + f.n_out + i))
        .chain((0..g.n_lat()).map(|i| lat + f.n_lat() + i))
        .collect();
    let tags: Vec<LatentTag> = f.latent_tags.iter().chain(g.latent_tags.iter()).copied().collect();
    f.scattered(&f_map, total)
        .sum(g.scattered(&g_map, total))
        .into_bifunction(n_in, n_out, tags)
}

/// Pointwise sum of two bifunctions on the same spaces; latents of both
/// are kept, `F` first.
pub fn add(f: &QuadBifunction, g: &QuadBifunction) -> Result<QuadBifunction> {
    dim_check("sum domain", f.n_in, g.n_in)?;
    dim_check("sum codomain", f.n_out, g.n_out)?;
    let io = f.n_in + f.n_out;
    let total = io + f.n_lat() + g.n_lat();
    let f_map: Vec<usize> = (0..f.dim()).collect();
    let g_map: Vec<usize> = (0..io).chain((0..g.n_lat()).map(|i| io + f.n_lat() + i)).collect();
    let tags: Vec<LatentTag> = f.latent_tags.iter().chain(g.latent_tags.iter()).copied().collect();
    Ok(f.scattered(&f_map, total)
        .sum(g.scattered(&g_map, total))
        .into_bifunction(f.n_in, f.n_out, tags))
}

/// Symmetry `R^(n+m) ↛ R^(m+n)`, `(a, b) ↦ (b, a)`.
pub fn swap(n: usize, m: usize) -> QuadBifunction {
    let k = n + m;
    let mut a = DMatrix::zeros(k, 2 * k);
    // output block b
    for i in 0..m {
        a[(i, k + i)] = 1.0;
        a[(i, n + i)] = -1.0;
    }
    // output block a
    for i in 0..n {
        a[(m + i, k + m + i)] = 1.0;
        a[(m + i, i)] = -1.0;
    }
    QuadBifunction::indicator(k, k, a, DVector::zeros(k))
}

/// Indicator `δ(y | A x + c)` of an affine map, `A` of shape `n × m`.
pub fn from_linear_map(a: &DMatrix<f64>, c: Option<&DVector<f64>>) -> Result<QuadBifunction> {
    let (n, m) = a.shape();
    if !linalg::all_finite_mat(a) {
        return Err(Error::InvalidProblem("non-finite entry in linear map".into()));
    }
    let offset = match c {
        Some(c) => {
            dim_check("affine offset", n, c.len())?;
            c.clone()
        }
        None => DVector::zeros(n),
    };
    let mut rows = DMatrix::zeros(n, m + n);
    rows.view_mut((0, 0), (n, m)).copy_from(&(-a));
    for i in 0..n {
        rows[(i, m + i)] = 1.0;
    }
    Ok(QuadBifunction::indicator(m, n, rows, offset))
}

/// `δ_{x0}: R^0 ↛ R^n`, 0 exactly at `x0`.
pub fn point(x0: &DVector<f64>) -> QuadBifunction {
    let n = x0.len();
    QuadBifunction::indicator(0, n, DMatrix::identity(n, n), x0.clone())
}

/// Duplicate map `Δ: R^n ↛ R^n ⊕ R^n`.
pub fn dup(n: usize) -> QuadBifunction {
    let mut a = DMatrix::zeros(2 * n, 3 * n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        a[(i, i)] = -1.0;
        a[(n + i, 2 * n + i)] = 1.0;
        a[(n + i, i)] = -1.0;
    }
    QuadBifunction::indicator(n, 2 * n, a, DVector::zeros(2 * n))
}

/// Merge map `μ: R^n ⊕ R^n ↛ R^n`.
pub fn merge(n: usize) -> QuadBifunction {
    let mut a = DMatrix::zeros(2 * n, 3 * n);
    for i in 0..n {
        a[(i, i)] = 1.0;
        a[(i, 2 * n + i)] = -1.0;
        a[(n + i, n + i)] = 1.0;
        a[(n + i, 2 * n + i)] = -1.0;
    }
    QuadBifunction::indicator(2 * n, n, a, DVector::zeros(2 * n))
}

/// Unconstrained `½ sᵀ Qm s + linᵀ s + constant` over `s = (input; output)`.
pub fn quadratic_cost(
    qm: &DMatrix<f64>,
    lin: &DVector<f64>,
    constant: f64,
    dims: (usize, usize),
) -> Result<QuadBifunction> {
    let dim = dims.0 + dims.1;
    dim_check("cost matrix order", dim, qm.nrows())?;
    dim_check("cost matrix order", dim, qm.ncols())?;
    dim_check("linear cost length", dim, lin.len())?;
    QuadBifunction::new(
        dims.0,
        dims.1,
        Vec::new(),
        qm.clone(),
        lin.clone(),
        constant,
        DMatrix::zeros(0, dim),
        DVector::zeros(0),
        DMatrix::zeros(0, dim),
        DVector::zeros(0),
    )
}

/// Indicator of `{ s = (input; output) : A_in s ≤ b_in, A_eq s = b_eq }`.
pub fn polyhedral_constraint(
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    dims: (usize, usize),
) -> Result<QuadBifunction> {
    let dim = dims.0 + dims.1;
    QuadBifunction::new(
        dims.0,
        dims.1,
        Vec::new(),
        DMatrix::zeros(dim, dim),
        DVector::zeros(dim),
        0.0,
        a_eq.clone(),
        b_eq.clone(),
        a_in.clone(),
        b_in.clone(),
    )
}

/// Relative feasibility tolerance for latent-free evaluation.
const PIN_FEAS_TOL: f64 = 1e-9;

/// `F(u, x)`: pins inputs and outputs, then minimizes over the latents.
///
/// An iteration-capped inner solve is reported as
/// [`Error::SolverMaxIter`], never as a value.
pub fn evaluate(
    f: &QuadBifunction,
    u: &DVector<f64>,
    x: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<ExtendedValue> {
    dim_check("evaluate input", f.n_in, u.len())?;
    dim_check("evaluate output", f.n_out, x.len())?;
    let qp = pinned_qp(f, u, x);
    if qp.dim() == 0 {
        // Latent-free: feasibility and the objective are direct formulas.
        let eq_ok = qp.b_eq.iter().all(|&b| b.abs() <= PIN_FEAS_TOL * (1.0 + u.amax().max(x.amax())));
        let in_ok = qp.b_in.iter().all(|&b| b >= -PIN_FEAS_TOL * (1.0 + u.amax().max(x.amax())));
        return Ok(if eq_ok && in_ok {
            ExtendedValue::Finite(qp.r)
        } else {
            ExtendedValue::PlusInfinity
        });
    }
    let sol = solver::solve(&qp, opts)?;
    match sol.status {
        Status::Optimal => Ok(ExtendedValue::Finite(sol.objective)),
        Status::PrimalInfeasible => Ok(ExtendedValue::PlusInfinity),
        Status::DualInfeasibleOrUnbounded => Ok(ExtendedValue::MinusInfinity),
        Status::MaxIter => Err(Error::SolverMaxIter { iterations: sol.iterations }),
    }
}

/// The QP over latents obtained by fixing `(u, x)`.
pub fn pinned_qp(f: &QuadBifunction, u: &DVector<f64>, x: &DVector<f64>) -> FlatQP {
    let k = f.n_in + f.n_out;
    let nl = f.n_lat();
    let s = vconcat(u, x);
    let p_ss = f.p.view((0, 0), (k, k));
    let p_ws = f.p.view((k, 0), (nl, k));
    let p_ww = f.p.view((k, k), (nl, nl)).into_owned();
    let q_s = f.q.rows(0, k);
    let q_w = f.q.rows(k, nl) + p_ws * &s;
    let r = f.r + 0.5 * s.dot(&(p_ss * &s)) + q_s.dot(&s);
    let b_eq = &f.b_eq - f.a_eq.columns(0, k) * &s;
    let b_in = &f.b_in - f.a_in.columns(0, k) * &s;
    FlatQP::unlabeled(
        p_ww,
        q_w,
        r,
        f.a_eq.columns(k, nl).into_owned(),
        b_eq,
        f.a_in.columns(k, nl).into_owned(),
        b_in,
    )
}
