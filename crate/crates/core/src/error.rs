use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("morphism is not an endomorphism: domain {domain}, codomain {codomain}")]
    NotEndomorphism { domain: usize, codomain: usize },
    #[error("morphism is not closed: domain {domain}, codomain {codomain}")]
    NotClosed { domain: usize, codomain: usize },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("control weight matrix is singular")]
    SingularRu,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("solver reached the iteration limit ({iterations})")]
    SolverMaxIter { iterations: usize },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}
