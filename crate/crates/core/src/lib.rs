//! Compositional model predictive control.
//!
//! Multistage MPC problems are built by composing convex bifunctions: a
//! single-stage morphism is raised to the horizon length, closed with an
//! initial-state pin and a terminal term, compiled to a flat QP, and solved
//! by the embedded operator-splitting solver.

pub mod bifunction;
pub mod cli;
pub mod diagram;
pub mod error;
pub mod linalg;
pub mod mpc;
pub mod para;
pub mod problem;
pub mod qp;
pub mod sim;
pub mod solver;

pub use bifunction::{ExtendedValue, LatentTag, QuadBifunction};
pub use error::{Error, Result};
pub use mpc::{StageSpec, Terminal};
pub use para::{ParaMorphism, ParamBlock, WireKind};
pub use qp::{FlatQP, LedgerEntry, Role};
pub use solver::{Solution, SolverOptions, Status};
