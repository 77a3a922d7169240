//! Parameterized bifunctions: a morphism `X → Y` is a parameter space `U`
//! together with a bifunction `U ⊕ X ↛ Y`.

use crate::bifunction::{self, LatentTag, QuadBifunction};
use crate::error::{Error, Result};

/// One block of parameters and the timestep it controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamBlock {
    pub step: usize,
    pub dim: usize,
}

/// Whether a codomain coordinate carries the running state or an
/// auxiliary copy (e.g. a duplicated wire).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WireKind {
    State,
    Aux,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParaMorphism {
    param_dim: usize,
    domain_dim: usize,
    body: QuadBifunction,
    /// Newest block first.
    param_ledger: Vec<ParamBlock>,
    /// Number of stage applications this morphism spans.
    steps: usize,
    codomain_kinds: Vec<WireKind>,
}

impl ParaMorphism {
    pub fn new(param_ledger: Vec<ParamBlock>, body: QuadBifunction, steps: usize) -> Result<Self> {
        let param_dim: usize = param_ledger.iter().map(|b| b.dim).sum();
        if body.n_in() < param_dim {
            return Err(Error::DimensionMismatch {
                context: "parameterized body input",
                expected: param_dim,
                found: body.n_in(),
            });
        }
        let codomain_kinds = vec![WireKind::State; body.n_out()];
        Ok(ParaMorphism {
            param_dim,
            domain_dim: body.n_in() - param_dim,
            body,
            param_ledger,
            steps,
            codomain_kinds,
        })
    }

    /// `(R^0, F)`: a plain bifunction with no parameters.
    pub fn lift(body: QuadBifunction) -> Self {
        ParaMorphism::new(Vec::new(), body, 0).expect("a parameter-free body always fits")
    }

    pub fn with_codomain_kinds(mut self, kinds: Vec<WireKind>) -> Result<Self> {
        if kinds.len() != self.codomain_dim() {
            return Err(Error::DimensionMismatch {
                context: "codomain wire kinds",
                expected: self.codomain_dim(),
                found: kinds.len(),
            });
        }
        self.codomain_kinds = kinds;
        Ok(self)
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    pub fn codomain_dim(&self) -> usize {
        self.body.n_out()
    }

    pub fn body(&self) -> &QuadBifunction {
        &self.body
    }

    pub fn param_ledger(&self) -> &[ParamBlock] {
        &self.param_ledger
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn codomain_kinds(&self) -> &[WireKind] {
        &self.codomain_kinds
    }
}

/// `(I, id_X)`.
pub fn para_identity(n: usize) -> ParaMorphism {
    ParaMorphism::lift(bifunction::identity(n))
}

/// `(U₂ ⊕ U₁, g ∘ (id_{U₂} ⊕ f))`: apply `f`, then `g`.
///
/// The parameters of the result read `(g's blocks, f's blocks)`, so a chain
/// of stages lists its controls newest first.
pub fn para_compose(g: &ParaMorphism, f: &ParaMorphism) -> Result<ParaMorphism> {
    if f.codomain_dim() != g.domain_dim {
        return Err(Error::DimensionMismatch {
            context: "parameterized compose interface",
            expected: f.codomain_dim(),
            found: g.domain_dim,
        });
    }
    let offset = f.steps;
    let g_body = g.body.shift_tags(offset);
    let g_ledger: Vec<ParamBlock> = g
        .param_ledger
        .iter()
        .map(|b| ParamBlock { step: b.step + offset, dim: b.dim })
        .collect();

    let lifted_f = bifunction::oplus(&bifunction::identity(g.param_dim), &f.body);

    // The running state after `offset` steps gets its label only the first
    // time it crosses an interface; later copies are auxiliary.
    let state_seen = f.body.latent_tags().contains(&LatentTag::State(offset));
    let mut iface: Vec<LatentTag> = Vec::with_capacity(g.param_dim + f.codomain_dim());
    for block in &g_ledger {
        iface.extend(std::iter::repeat_n(LatentTag::ControlCopy(block.step), block.dim));
    }
    iface.extend(f.codomain_kinds.iter().map(|k| match k {
        WireKind::State if !state_seen => LatentTag::State(offset),
        _ => LatentTag::Aux,
    }));

    let body = bifunction::compose_tagged(&g_body, &lifted_f, &iface)?;
    let param_ledger = g_ledger.into_iter().chain(f.param_ledger.iter().copied()).collect();
    Ok(ParaMorphism {
        param_dim: g.param_dim + f.param_dim,
        domain_dim: f.domain_dim,
        body,
        param_ledger,
        steps: f.steps + g.steps,
        codomain_kinds: g.codomain_kinds.clone(),
    })
}

/// `m ∘ m ∘ … ∘ m` (`n` copies).
pub fn para_power(m: &ParaMorphism, n: usize) -> Result<ParaMorphism> {
    if m.domain_dim != m.codomain_dim() {
        return Err(Error::NotEndomorphism { domain: m.domain_dim, codomain: m.codomain_dim() });
    }
    if n == 0 {
        return Err(Error::IndexOutOfRange("power must be at least 1".into()));
    }
    let mut acc = m.clone();
    for _ in 1..n {
        acc = para_compose(m, &acc)?;
    }
    Ok(acc)
}

/// `(R^0, terminal) ∘ m ∘ (R^0, initial)`, a morphism `R^0 → R^0`.
pub fn close(m: &ParaMorphism, initial: &QuadBifunction, terminal: &QuadBifunction) -> Result<ParaMorphism> {
    if initial.n_in() != 0 || initial.n_out() != m.domain_dim {
        return Err(Error::DimensionMismatch {
            context: "initial morphism",
            expected: m.domain_dim,
            found: initial.n_out(),
        });
    }
    if terminal.n_out() != 0 || terminal.n_in() != m.codomain_dim() {
        return Err(Error::DimensionMismatch {
            context: "terminal morphism",
            expected: m.codomain_dim(),
            found: terminal.n_in(),
        });
    }
    let started = para_compose(m, &ParaMorphism::lift(initial.clone()))?;
    para_compose(&ParaMorphism::lift(terminal.clone()), &started)
}
