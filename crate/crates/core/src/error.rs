use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("element table line {line}: {reason}")]
    ElementTable { line: usize, reason: String },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite value produced by {op}")]
    NumericError { op: &'static str },
    #[error("attention row {row} has no allowed key")]
    AllMaskedRow { row: usize },
    #[error("backward needs a scalar loss, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("{n} atoms exceed the padding length {target}")]
    TooManyAtoms { n: usize, target: usize },
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("allowed interaction percentage must lie in (0, 100], got {0}")]
    BadFraction(f64),
    #[error("structure `{id}` is missing {field}")]
    MissingField { id: String, field: &'static str },
    #[error("dataset has no {0} labels")]
    NoLabels(&'static str),
    #[error("loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("atoms {i} and {j} overlap (distance {distance:e} \u{c5})")]
    OverlappingAtoms { i: usize, j: usize, distance: f64 },
    #[error("force field returned non-finite forces at step {step}")]
    NonFiniteForces { step: usize },
    #[error("vector norm is too small to define a direction")]
    ZeroVector,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
