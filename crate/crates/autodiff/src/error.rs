use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("expected {expected} {what}, got {got}")]
    Arity {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("non-finite value produced at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("{op} is not differentiable at the recorded point (node {node})")]
    NonDifferentiable { node: usize, op: &'static str },
    #[error("{op} has no registered tangent rule; cannot differentiate its derivative (node {node})")]
    NoSecondOrder { node: usize, op: &'static str },
    #[error("output of shape {shape:?} needs an explicit cotangent")]
    NonScalarOutput { shape: (usize, usize) },
    #[error("index {index} out of range for {what} (have {len})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("value belongs to a different recording context")]
    ForeignValue,
}
