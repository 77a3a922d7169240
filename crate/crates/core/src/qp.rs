//! Flat quadratic programs: the compiled form of a closed composite, the
//! directly transcribed multistage problem, and the JSON export.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bifunction::LatentTag;
use crate::error::{Error, Result};
use crate::linalg::{self, from_rows, to_rows, vstack};
use crate::mpc::{StageSpec, Terminal};
use crate::para::ParaMorphism;

/// What a block of decision variables stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Control,
    State,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub start: usize,
    pub end: usize,
    pub role: Role,
    /// Timestep for controls and states; `None` for plain latents.
    pub step: Option<usize>,
}

impl LedgerEntry {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// `minimize ½ zᵀPz + qᵀz + r  s.t.  A_eq z = b_eq,  A_in z ≤ b_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatQP {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: f64,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub ledger: Vec<LedgerEntry>,
}

impl FlatQP {
    /// A QP whose variables are all plain latents.
    pub fn unlabeled(
        p: DMatrix<f64>,
        q: DVector<f64>,
        r: f64,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Self {
        let n = q.len();
        let ledger = if n == 0 {
            Vec::new()
        } else {
            vec![LedgerEntry { start: 0, end: n, role: Role::Latent, step: None }]
        };
        FlatQP { p, q, r, a_eq, b_eq, a_in, b_in, ledger }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.p * z)) + self.q.dot(z) + self.r
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let check = |context: &'static str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { context, expected, found })
            }
        };
        check("P rows", n, self.p.nrows())?;
        check("P cols", n, self.p.ncols())?;
        check("A_eq cols", n, self.a_eq.ncols())?;
        check("b_eq length", self.a_eq.nrows(), self.b_eq.len())?;
        check("A_in cols", n, self.a_in.ncols())?;
        check("b_in length", self.a_in.nrows(), self.b_in.len())?;
        let finite = linalg::all_finite_mat(&self.p)
            && linalg::all_finite_vec(&self.q)
            && self.r.is_finite()
            && linalg::all_finite_mat(&self.a_eq)
            && linalg::all_finite_vec(&self.b_eq)
            && linalg::all_finite_mat(&self.a_in)
            && linalg::all_finite_vec(&self.b_in);
        if !finite {
            return Err(Error::InvalidProblem("non-finite entry in QP data".into()));
        }
        let mut cursor = 0;
        for e in &self.ledger {
            if e.start != cursor || e.end < e.start {
                return Err(Error::InvalidProblem(format!(
                    "ledger does not partition the variables at index {cursor}"
                )));
            }
            cursor = e.end;
        }
        check("ledger coverage", n, cursor)?;
        linalg::psd_project(&self.p)?;
        Ok(())
    }

    fn blocks(&self, role: Role) -> Vec<(usize, &LedgerEntry)> {
        let mut v: Vec<_> = self
            .ledger
            .iter()
            .filter(|e| e.role == role)
            .map(|e| (e.step.unwrap_or(usize::MAX), e))
            .collect();
        v.sort_by_key(|(k, e)| (*k, e.start));
        v
    }

    /// Control blocks of `z` in chronological order.
    pub fn controls(&self, z: &DVector<f64>) -> Vec<(usize, DVector<f64>)> {
        self.blocks(Role::Control)
            .into_iter()
            .map(|(k, e)| (k, z.rows(e.start, e.len()).into_owned()))
            .collect()
    }

    /// State blocks of `z` in chronological order.
    pub fn states(&self, z: &DVector<f64>) -> Vec<(usize, DVector<f64>)> {
        self.blocks(Role::State)
            .into_iter()
            .map(|(k, e)| (k, z.rows(e.start, e.len()).into_owned()))
            .collect()
    }

    /// Control at a given timestep, if labelled.
    pub fn control_at(&self, z: &DVector<f64>, step: usize) -> Option<DVector<f64>> {
        self.controls(z).into_iter().find(|(k, _)| *k == step).map(|(_, v)| v)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&QpDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: QpDocument = serde_json::from_str(text)?;
        let qp = doc.into_qp()?;
        qp.validate()?;
        Ok(qp)
    }
}

/// Serialized layout of a [`FlatQP`]: dense row-major matrices.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QpDocument {
    n: usize,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    q: Vec<f64>,
    r: f64,
    #[serde(rename = "A_eq")]
    a_eq: Vec<Vec<f64>>,
    b_eq: Vec<f64>,
    #[serde(rename = "A_in")]
    a_in: Vec<Vec<f64>>,
    b_in: Vec<f64>,
    ledger: Vec<LedgerEntry>,
}

impl From<&FlatQP> for QpDocument {
    fn from(qp: &FlatQP) -> Self {
        QpDocument {
            n: qp.dim(),
            p: to_rows(&qp.p),
            q: qp.q.iter().copied().collect(),
            r: qp.r,
            a_eq: to_rows(&qp.a_eq),
            b_eq: qp.b_eq.iter().copied().collect(),
            a_in: to_rows(&qp.a_in),
            b_in: qp.b_in.iter().copied().collect(),
            ledger: qp.ledger.clone(),
        }
    }
}

impl QpDocument {
    fn into_qp(self) -> Result<FlatQP> {
        Ok(FlatQP {
            p: from_rows(&self.p, self.n)?,
            q: DVector::from_vec(self.q),
            r: self.r,
            a_eq: from_rows(&self.a_eq, self.n)?,
            b_eq: DVector::from_vec(self.b_eq),
            a_in: from_rows(&self.a_in, self.n)?,
            b_in: DVector::from_vec(self.b_in),
            ledger: self.ledger,
        })
    }
}

/// Flattens a closed parameterized morphism `R^0 → R^0` into a QP over
/// `(parameters; latents)`.
pub fn compile(m: &ParaMorphism) -> Result<FlatQP> {
    if m.domain_dim() != 0 || m.codomain_dim() != 0 {
        return Err(Error::NotClosed { domain: m.domain_dim(), codomain: m.codomain_dim() });
    }
    let body = m.body();
    let mut ledger = Vec::new();
    let mut cursor = 0;
    for block in m.param_ledger() {
        ledger.push(LedgerEntry {
            start: cursor,
            end: cursor + block.dim,
            role: Role::Control,
            step: Some(block.step),
        });
        cursor += block.dim;
    }
    debug_assert_eq!(cursor, m.param_dim());
    for tag in body.latent_tags() {
        let (role, step) = match *tag {
            LatentTag::State(k) => (Role::State, Some(k)),
            LatentTag::ControlCopy(_) | LatentTag::Aux => (Role::Latent, None),
        };
        match ledger.last_mut() {
            Some(last) if last.role == role && last.step == step && last.end == cursor => {
                last.end += 1;
            }
            _ => ledger.push(LedgerEntry { start: cursor, end: cursor + 1, role, step }),
        }
        cursor += 1;
    }
    Ok(FlatQP {
        p: body.p().clone(),
        q: body.q().clone(),
        r: body.r(),
        a_eq: body.a_eq().clone(),
        b_eq: body.b_eq().clone(),
        a_in: body.a_in().clone(),
        b_in: body.b_in().clone(),
        ledger,
    })
}

/// Direct transcription of the horizon-`horizon` problem over
/// `(u_0 … u_{N−1}, x_0 … x_N)`.
pub fn build_monolithic(
    spec: &StageSpec,
    horizon: usize,
    x0: &DVector<f64>,
    terminal: &Terminal,
) -> Result<FlatQP> {
    if horizon == 0 {
        return Err(Error::IndexOutOfRange("horizon must be at least 1".into()));
    }
    spec.validate()?;
    let n = spec.state_dim();
    let m = spec.control_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { context: "initial state", expected: n, found: x0.len() });
    }
    let nu = horizon * m;
    let dim = nu + (horizon + 1) * n;
    let u_at = |k: usize| k * m;
    let x_at = |k: usize| nu + k * n;

    let (stage_p, stage_q) = spec.cost_blocks_xu();
    let mut p = DMatrix::zeros(dim, dim);
    let mut q = DVector::zeros(dim);
    let n_g = spec.g_in.nrows();
    let mut a_in = DMatrix::zeros(horizon * n_g, dim);
    let mut b_in = DVector::zeros(horizon * n_g);
    let mut a_eq = DMatrix::zeros((horizon + 1) * n, dim);
    let mut b_eq = DVector::zeros((horizon + 1) * n);

    for k in 0..horizon {
        let idx: Vec<usize> = (x_at(k)..x_at(k) + n).chain(u_at(k)..u_at(k) + m).collect();
        for (a, &ia) in idx.iter().enumerate() {
            q[ia] += stage_q[a];
            for (b, &ib) in idx.iter().enumerate() {
                p[(ia, ib)] += stage_p[(a, b)];
            }
        }
        for r in 0..n_g {
            let row = k * n_g + r;
            for (a, &ia) in idx.iter().enumerate() {
                a_in[(row, ia)] = spec.g_in[(r, a)];
            }
            b_in[row] = spec.h_in[r];
        }
        // x_{k+1} − A x_k − B u_k = c
        for r in 0..n {
            let row = k * n + r;
            a_eq[(row, x_at(k + 1) + r)] = 1.0;
            for j in 0..n {
                a_eq[(row, x_at(k) + j)] = -spec.a[(r, j)];
            }
            for j in 0..m {
                a_eq[(row, u_at(k) + j)] = -spec.b[(r, j)];
            }
            b_eq[row] = spec.c[r];
        }
    }
    for r in 0..n {
        let row = horizon * n + r;
        a_eq[(row, x_at(0) + r)] = 1.0;
        b_eq[row] = x0[r];
    }

    let xn = x_at(horizon);
    match terminal {
        Terminal::None => {}
        Terminal::Quadratic(qf) => {
            if qf.nrows() != n || qf.ncols() != n {
                return Err(Error::DimensionMismatch { context: "terminal weight", expected: n, found: qf.nrows() });
            }
            for a in 0..n {
                for b in 0..n {
                    p[(xn + a, xn + b)] += 2.0 * qf[(a, b)];
                }
            }
        }
        Terminal::Point(target) => {
            if target.len() != n {
                return Err(Error::DimensionMismatch { context: "terminal target", expected: n, found: target.len() });
            }
            let mut rows = DMatrix::zeros(n, dim);
            for r in 0..n {
                rows[(r, xn + r)] = 1.0;
            }
            a_eq = vstack(&a_eq, &rows);
            b_eq = linalg::vconcat(&b_eq, target);
        }
    }

    let mut ledger = Vec::new();
    for k in 0..horizon {
        if m > 0 {
            ledger.push(LedgerEntry { start: u_at(k), end: u_at(k) + m, role: Role::Control, step: Some(k) });
        }
    }
    for k in 0..=horizon {
        if n > 0 {
            ledger.push(LedgerEntry { start: x_at(k), end: x_at(k) + n, role: Role::State, step: Some(k) });
        }
    }
    Ok(FlatQP { p, q, r: 0.0, a_eq, b_eq, a_in, b_in, ledger })
}
