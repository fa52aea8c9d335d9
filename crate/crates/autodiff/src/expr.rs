//! Frozen recordings that can be replayed at new input/parameter values.

use std::collections::HashMap;

use crate::error::AdError;
use crate::tape::{NodeId, Op, Tape, Var};
use crate::tensor::Tensor;

/// A recorded expression with ordered input slots, parameter slots, and
/// outputs. Replaying never touches the stored log.
#[derive(Debug, Clone)]
pub struct Expr {
    ops: Vec<Op>,
    leaves: Vec<Option<Tensor>>,
    inputs: Vec<NodeId>,
    params: Vec<NodeId>,
    outputs: Vec<NodeId>,
}

/// Handles into a tape produced by [`Expr::record`].
pub struct Recorded<'t> {
    pub inputs: Vec<Var<'t>>,
    pub params: Vec<Var<'t>>,
    pub outputs: Vec<Var<'t>>,
}

impl Expr {
    /// Freeze the portion of `tape` needed for `outputs`. Slot leaves must
    /// come from `tape`.
    pub fn from_tape(tape: &Tape, inputs: &[Var<'_>], params: &[Var<'_>], outputs: &[Var<'_>]) -> Self {
        let all = inputs.iter().chain(params).chain(outputs);
        let mut upto = 0;
        for v in all {
            assert!(std::ptr::eq(v.tape(), tape), "slot from another recording context");
            upto = upto.max(v.id() + 1);
        }
        let (ops, leaves) = tape.snapshot_ops(upto);
        Self {
            ops,
            leaves,
            inputs: inputs.iter().map(|v| v.id()).collect(),
            params: params.iter().map(|v| v.id()).collect(),
            outputs: outputs.iter().map(|v| v.id()).collect(),
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Replay onto an empty tape with the given slot values.
    pub fn record<'t>(&self, tape: &'t Tape, inputs: &[Tensor], params: &[Tensor]) -> Result<Recorded<'t>, AdError> {
        assert!(tape.is_empty(), "Expr::record needs a fresh tape");
        if inputs.len() != self.inputs.len() {
            return Err(AdError::Arity {
                what: "inputs",
                expected: self.inputs.len(),
                got: inputs.len(),
            });
        }
        if params.len() != self.params.len() {
            return Err(AdError::Arity {
                what: "params",
                expected: self.params.len(),
                got: params.len(),
            });
        }
        let mut slot: HashMap<NodeId, &Tensor> = HashMap::new();
        for (id, v) in self.inputs.iter().zip(inputs).chain(self.params.iter().zip(params)) {
            let recorded = self.leaves[*id].as_ref().expect("slot is a leaf");
            if recorded.shape() != v.shape() {
                return Err(AdError::ShapeMismatch {
                    op: "slot",
                    lhs: v.shape(),
                    rhs: recorded.shape(),
                });
            }
            slot.insert(*id, v);
        }
        for (id, op) in self.ops.iter().enumerate() {
            let got = match op {
                Op::Leaf(kind) => {
                    let value = match slot.get(&id) {
                        Some(v) => (*v).clone(),
                        None => self.leaves[id].clone().expect("leaf value recorded"),
                    };
                    tape.push_leaf_raw(*kind, value)
                }
                op => tape.push(op.clone()).id(),
            };
            debug_assert_eq!(got, id);
        }
        let vars = |ids: &[NodeId]| ids.iter().map(|&i| tape.var(i)).collect::<Vec<_>>();
        Ok(Recorded {
            inputs: vars(&self.inputs),
            params: vars(&self.params),
            outputs: vars(&self.outputs),
        })
    }

    pub fn evaluate(&self, inputs: &[Tensor], params: &[Tensor]) -> Result<Vec<Tensor>, AdError> {
        let tape = Tape::new();
        let rec = self.record(&tape, inputs, params)?;
        tape.check_finite()?;
        Ok(rec.outputs.iter().map(|o| o.value()).collect())
    }

    /// Adjoint of output `output` with respect to every input slot.
    pub fn grad_inputs(
        &self,
        inputs: &[Tensor],
        params: &[Tensor],
        output: usize,
        cotangent: Option<&Tensor>,
    ) -> Result<Vec<Tensor>, AdError> {
        self.grad_slots(inputs, params, output, cotangent, true)
    }

    /// Adjoint of output `output` with respect to every parameter slot.
    pub fn grad_params(
        &self,
        inputs: &[Tensor],
        params: &[Tensor],
        output: usize,
        cotangent: Option<&Tensor>,
    ) -> Result<Vec<Tensor>, AdError> {
        self.grad_slots(inputs, params, output, cotangent, false)
    }

    fn grad_slots(
        &self,
        inputs: &[Tensor],
        params: &[Tensor],
        output: usize,
        cotangent: Option<&Tensor>,
        wrt_inputs: bool,
    ) -> Result<Vec<Tensor>, AdError> {
        if output >= self.outputs.len() {
            return Err(AdError::OutOfRange {
                what: "outputs",
                index: output,
                len: self.outputs.len(),
            });
        }
        let tape = Tape::new();
        let rec = self.record(&tape, inputs, params)?;
        tape.check_finite()?;
        let grads = tape.backward(&[(rec.outputs[output], cotangent.cloned())])?;
        let slots = if wrt_inputs { &rec.inputs } else { &rec.params };
        Ok(slots.iter().map(|v| grads.wrt(*v)).collect())
    }

    /// A new expression whose outputs are the derivatives of this one's
    /// outputs with respect to input slot `wrt_input`, along an all-ones
    /// direction (the plain derivative for a 1×1 input). The result keeps the
    /// same slots, so it can be passed to [`Expr::grad_params`] in turn.
    pub fn derivative_of_derivative(
        &self,
        inputs: &[Tensor],
        params: &[Tensor],
        wrt_input: usize,
    ) -> Result<Expr, AdError> {
        if wrt_input >= self.inputs.len() {
            return Err(AdError::OutOfRange {
                what: "inputs",
                index: wrt_input,
                len: self.inputs.len(),
            });
        }
        let tape = Tape::new();
        let rec = self.record(&tape, inputs, params)?;
        let x = rec.inputs[wrt_input];
        let (r, c) = x.shape();
        let seed = tape.constant(Tensor::ones(r, c));
        let tangents = tape.jvp(&[(x, seed)], &rec.outputs)?;
        Ok(Expr::from_tape(&tape, &rec.inputs, &rec.params, &tangents))
    }
}
