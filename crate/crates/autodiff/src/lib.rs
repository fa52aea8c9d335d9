//! A small reverse-mode differentiation engine over dense 2-D tensors.
//!
//! Operations are recorded on a [`Tape`] and evaluated eagerly. A reverse
//! sweep ([`Tape::backward`]) yields adjoints for any node; [`Tape::jvp`]
//! appends forward-mode tangent nodes to the same log, so a derivative with
//! respect to an input can itself be differentiated with respect to the
//! parameters. [`Expr`] freezes a recording into a re-evaluable expression.

mod error;
mod expr;
mod tape;
mod tensor;

pub use error::AdError;
pub use expr::Expr;
pub use tape::{BinaryKind, Gradients, LeafKind, NodeId, Op, Tape, Var};
pub use tensor::{gemm, Tensor};
