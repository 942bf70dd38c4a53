use num_complex::Complex64;
use thiserror::Error;

/// Failures reported by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid frequency range: {0}")]
    InvalidRange(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("damping coefficient d(s) vanishes at s = {0}")]
    DivisionByZero(Complex64),

    #[error("damping model undefined at s = {0}")]
    DomainError(Complex64),

    #[error("mass matrix is singular (reciprocal condition estimate {rcond:.3e})")]
    SingularMass { rcond: f64 },

    #[error("pencil is singular at s = {s}{} (reciprocal condition estimate {rcond:.3e})", node_suffix(*.node))]
    SingularPencil {
        s: Complex64,
        node: Option<usize>,
        rcond: f64,
    },

    #[error("reduced pencil is singular at sample {k} (s = {s})")]
    SingularReducedPencil { k: usize, s: Complex64 },

    #[error("unsupported damping: {0}")]
    UnsupportedDamping(String),

    #[error("pencil is not asymptotically stable (max real part {max_real:.3e})")]
    UnstablePencil { max_real: f64 },

    #[error("eigenvector matrix is ill conditioned (condition {cond:.3e})")]
    IllConditionedEigenvectors { cond: f64 },

    #[error("assembly hypotheses violated: {}", .0.join("; "))]
    HypothesisViolation(Vec<String>),

    #[error("velocity/position split samples are missing")]
    MissingSplitSamples,

    #[error("derivative sample missing at node {0}")]
    MissingDerivative(usize),

    #[error("data are not conjugate symmetric (max violation {max_violation:.3e})")]
    NotConjugateSymmetric { max_violation: f64 },

    #[error("quadrature weight at index {0} is zero")]
    ZeroWeight(usize),

    #[error("requested order {r} exceeds numerical rank (sigma_r/sigma_1 = {ratio:.3e})")]
    RankDeficient { r: usize, ratio: f64 },

    #[error("reference response vanishes at grid point {0}")]
    ZeroReference(usize),

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn node_suffix(node: Option<usize>) -> String {
    match node {
        Some(i) => format!(" (node {i})"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
