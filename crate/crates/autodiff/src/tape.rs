//! Recording context, differentiable values, and the reverse sweep.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::AdError;
use crate::tensor::{gemm, Tensor};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Input,
    Param,
    Const,
}

/// One recorded primitive. Operands always refer to earlier nodes, so the log
/// is topologically ordered by construction.
#[derive(Debug, Clone)]
pub enum Op {
    Leaf(LeafKind),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    Sin(NodeId),
    Cos(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sqrt(NodeId),
    Abs(NodeId),
    Relu(NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Sum(NodeId),
    SumRows(NodeId),
    SumCols(NodeId),
    BroadcastRows(NodeId, usize),
    BroadcastCols(NodeId, usize),
    Reshape(NodeId, usize, usize),
    SliceCols(NodeId, usize, usize),
    ConcatCols(NodeId, NodeId),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sin(_) => "sin",
            Op::Cos(_) => "cos",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Ln(_) => "ln",
            Op::Sqrt(_) => "sqrt",
            Op::Abs(_) => "abs",
            Op::Relu(_) => "relu",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Sum(_) => "sum",
            Op::SumRows(_) => "sum_rows",
            Op::SumCols(_) => "sum_cols",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::BroadcastCols(..) => "broadcast_cols",
            Op::Reshape(..) => "reshape",
            Op::SliceCols(..) => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
        }
    }

    fn operands(&self) -> (Option<NodeId>, Option<NodeId>) {
        use Op::*;
        match *self {
            Leaf(_) => (None, None),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) | ConcatCols(a, b) => (Some(a), Some(b)),
            Neg(a)
            | Scale(a, _)
            | AddScalar(a, _)
            | Sin(a)
            | Cos(a)
            | Tanh(a)
            | Exp(a)
            | Ln(a)
            | Sqrt(a)
            | Abs(a)
            | Relu(a)
            | Transpose(a)
            | Sum(a)
            | SumRows(a)
            | SumCols(a)
            | BroadcastRows(a, _)
            | BroadcastCols(a, _)
            | Reshape(a, ..)
            | SliceCols(a, ..) => (Some(a), None),
        }
    }
}

/// Primal value of `op` given the values of its operands.
pub(crate) fn eval_op<'a>(op: &Op, val: impl Fn(NodeId) -> &'a Tensor) -> Tensor {
    use Op::*;
    match *op {
        Leaf(_) => unreachable!("leaves carry their own values"),
        Add(a, b) => val(a).zip_map(val(b), |x, y| x + y),
        Sub(a, b) => val(a).zip_map(val(b), |x, y| x - y),
        Mul(a, b) => val(a).zip_map(val(b), |x, y| x * y),
        Div(a, b) => val(a).zip_map(val(b), |x, y| x / y),
        Neg(a) => val(a).map(|x| -x),
        Scale(a, c) => val(a).map(|x| c * x),
        AddScalar(a, c) => val(a).map(|x| x + c),
        Sin(a) => val(a).map(f64::sin),
        Cos(a) => val(a).map(f64::cos),
        Tanh(a) => val(a).map(f64::tanh),
        Exp(a) => val(a).map(f64::exp),
        Ln(a) => val(a).map(f64::ln),
        Sqrt(a) => val(a).map(f64::sqrt),
        Abs(a) => val(a).map(f64::abs),
        Relu(a) => val(a).map(|x| x.max(0.0)),
        MatMul(a, b) => val(a).matmul(val(b)),
        Transpose(a) => val(a).transpose(),
        Sum(a) => Tensor::scalar(val(a).sum()),
        SumRows(a) => val(a).sum_rows(),
        SumCols(a) => val(a).sum_cols(),
        BroadcastRows(a, n) => val(a).broadcast_rows(n),
        BroadcastCols(a, n) => val(a).broadcast_cols(n),
        Reshape(a, r, c) => val(a).clone().reshaped(r, c),
        SliceCols(a, s, l) => val(a).slice_cols(s, l),
        ConcatCols(a, b) => val(a).concat_cols(val(b)),
    }
}

fn check_shapes(op: &Op, shape: impl Fn(NodeId) -> (usize, usize)) -> Result<(), AdError> {
    use Op::*;
    let mismatch = |a: (usize, usize), b: (usize, usize)| AdError::ShapeMismatch {
        op: op.name(),
        lhs: a,
        rhs: b,
    };
    match *op {
        Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
            if shape(a) != shape(b) {
                return Err(mismatch(shape(a), shape(b)));
            }
        }
        MatMul(a, b) => {
            if shape(a).1 != shape(b).0 {
                return Err(mismatch(shape(a), shape(b)));
            }
        }
        ConcatCols(a, b) => {
            if shape(a).0 != shape(b).0 {
                return Err(mismatch(shape(a), shape(b)));
            }
        }
        BroadcastRows(a, _) if shape(a).0 != 1 => return Err(mismatch(shape(a), (1, shape(a).1))),
        BroadcastCols(a, _) if shape(a).1 != 1 => return Err(mismatch(shape(a), (shape(a).0, 1))),
        Reshape(a, r, c) if shape(a).0 * shape(a).1 != r * c => return Err(mismatch(shape(a), (r, c))),
        SliceCols(a, s, l) if s + l > shape(a).1 => return Err(mismatch(shape(a), (shape(a).0, s + l))),
        _ => {}
    }
    Ok(())
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    first_non_finite: Option<NodeId>,
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// A recording context. Values are computed eagerly as operations are
/// recorded; the log can be swept backwards for adjoints or extended with
/// tangent nodes for derivatives of derivatives.
pub struct Tape {
    id: u64,
    check_finite: bool,
    inner: RefCell<Inner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            check_finite: true,
            inner: RefCell::new(Inner::default()),
        }
    }

    /// Disable the per-node finiteness scan (on by default).
    pub fn without_finite_check(mut self) -> Self {
        self.check_finite = false;
        self
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, value: Tensor) -> Var<'_> {
        self.leaf(LeafKind::Input, value)
    }

    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(LeafKind::Param, value)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(LeafKind::Const, value)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn leaf(&self, kind: LeafKind, value: Tensor) -> Var<'_> {
        self.push_node(Op::Leaf(kind), value)
    }

    fn push_node(&self, op: Op, value: Tensor) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        if self.check_finite && inner.first_non_finite.is_none() && !value.is_finite() {
            inner.first_non_finite = Some(id);
        }
        inner.nodes.push(Node { op, value });
        Var { tape: self, id }
    }

    /// Record `op`, computing its value from the operands already on the log.
    pub(crate) fn push(&self, op: Op) -> Var<'_> {
        let value = {
            let inner = self.inner.borrow();
            if let Err(e) = check_shapes(&op, |id| inner.nodes[id].value.shape()) {
                panic!("{e}");
            }
            eval_op(&op, |id| &inner.nodes[id].value)
        };
        self.push_node(op, value)
    }

    pub(crate) fn push_checked(&self, op: Op) -> Result<Var<'_>, AdError> {
        {
            let inner = self.inner.borrow();
            check_shapes(&op, |id| inner.nodes[id].value.shape())?;
        }
        Ok(self.push(op))
    }

    pub fn value(&self, var: Var<'_>) -> Tensor {
        self.assert_owns(var);
        self.inner.borrow().nodes[var.id].value.clone()
    }

    pub fn shape(&self, var: Var<'_>) -> (usize, usize) {
        self.assert_owns(var);
        self.inner.borrow().nodes[var.id].value.shape()
    }

    pub(crate) fn op(&self, id: NodeId) -> Op {
        self.inner.borrow().nodes[id].op.clone()
    }

    pub(crate) fn var(&self, id: NodeId) -> Var<'_> {
        Var { tape: self, id }
    }

    fn assert_owns(&self, var: Var<'_>) {
        assert!(
            std::ptr::eq(self, var.tape),
            "value belongs to a different recording context (tape {} vs {})",
            var.tape.id,
            self.id
        );
    }

    /// First node whose recorded value contains NaN or ±inf.
    pub fn check_finite(&self) -> Result<(), AdError> {
        let inner = self.inner.borrow();
        match inner.first_non_finite {
            Some(node) => Err(AdError::NonFinite {
                node,
                op: inner.nodes[node].op.name(),
            }),
            None => Ok(()),
        }
    }

    /// Reverse sweep seeded with a cotangent on each listed node. Seeding a
    /// 1×1 node with `None` uses a unit cotangent.
    pub fn backward(&self, seeds: &[(Var<'_>, Option<Tensor>)]) -> Result<Gradients, AdError> {
        let inner = self.inner.borrow();
        let nodes = &inner.nodes;
        let mut adj: Vec<Option<Tensor>> = Vec::new();
        let mut top = 0;
        for (var, _) in seeds {
            self.assert_owns(*var);
            top = top.max(var.id + 1);
        }
        adj.resize_with(top, || None);
        for (var, cot) in seeds {
            let shape = nodes[var.id].value.shape();
            let cot = match cot {
                Some(c) => {
                    if c.shape() != shape {
                        return Err(AdError::ShapeMismatch {
                            op: "cotangent",
                            lhs: c.shape(),
                            rhs: shape,
                        });
                    }
                    c.clone()
                }
                None if shape == (1, 1) => Tensor::scalar(1.0),
                None => return Err(AdError::NonScalarOutput { shape }),
            };
            accumulate(&mut adj, var.id, cot);
        }

        for id in (0..top).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            let v = |n: NodeId| &nodes[n].value;
            use Op::*;
            match node.op {
                Leaf(_) => {
                    adj[id] = Some(g);
                    continue;
                }
                Add(a, b) => {
                    accumulate(&mut adj, b, g.clone());
                    accumulate(&mut adj, a, g.clone());
                }
                Sub(a, b) => {
                    accumulate(&mut adj, b, g.map(|x| -x));
                    accumulate(&mut adj, a, g.clone());
                }
                Mul(a, b) => {
                    accumulate(&mut adj, a, g.zip_map(v(b), |x, y| x * y));
                    accumulate(&mut adj, b, g.zip_map(v(a), |x, y| x * y));
                }
                Div(a, b) => {
                    let ga = g.zip_map(v(b), |x, y| x / y);
                    let gb = ga.zip_map(&node.value, |x, o| -x * o);
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, b, gb);
                }
                Neg(a) => accumulate(&mut adj, a, g.map(|x| -x)),
                Scale(a, c) => accumulate(&mut adj, a, g.map(|x| c * x)),
                AddScalar(a, _) => accumulate(&mut adj, a, g.clone()),
                Sin(a) => accumulate(&mut adj, a, g.zip_map(v(a), |x, y| x * y.cos())),
                Cos(a) => accumulate(&mut adj, a, g.zip_map(v(a), |x, y| -x * y.sin())),
                Tanh(a) => accumulate(&mut adj, a, g.zip_map(&node.value, |x, o| x * (1.0 - o * o))),
                Exp(a) => accumulate(&mut adj, a, g.zip_map(&node.value, |x, o| x * o)),
                Ln(a) => accumulate(&mut adj, a, g.zip_map(v(a), |x, y| x / y)),
                Sqrt(a) => {
                    if node.value.data().contains(&0.0) {
                        return Err(AdError::NonDifferentiable { node: id, op: "sqrt" });
                    }
                    accumulate(&mut adj, a, g.zip_map(&node.value, |x, o| 0.5 * x / o));
                }
                Abs(a) => {
                    if v(a).data().contains(&0.0) {
                        return Err(AdError::NonDifferentiable { node: id, op: "abs" });
                    }
                    accumulate(&mut adj, a, g.zip_map(v(a), |x, y| x * y.signum()));
                }
                Relu(a) => {
                    if v(a).data().contains(&0.0) {
                        return Err(AdError::NonDifferentiable { node: id, op: "relu" });
                    }
                    accumulate(&mut adj, a, g.zip_map(v(a), |x, y| if y > 0.0 { x } else { 0.0 }));
                }
                MatMul(a, b) => {
                    accumulate(&mut adj, a, gemm(&g, false, v(b), true));
                    accumulate(&mut adj, b, gemm(v(a), true, &g, false));
                }
                Transpose(a) => accumulate(&mut adj, a, g.transpose()),
                Sum(a) => {
                    let (r, c) = v(a).shape();
                    accumulate(&mut adj, a, Tensor::filled(r, c, g.item()));
                }
                SumRows(a) => accumulate(&mut adj, a, g.broadcast_rows(v(a).rows())),
                SumCols(a) => accumulate(&mut adj, a, g.broadcast_cols(v(a).cols())),
                BroadcastRows(a, _) => accumulate(&mut adj, a, g.sum_rows()),
                BroadcastCols(a, _) => accumulate(&mut adj, a, g.sum_cols()),
                Reshape(a, ..) => {
                    let (r, c) = v(a).shape();
                    accumulate(&mut adj, a, g.clone().reshaped(r, c));
                }
                SliceCols(a, s, _) => accumulate(&mut adj, a, g.pad_cols(s, v(a).cols())),
                ConcatCols(a, b) => {
                    let ca = v(a).cols();
                    accumulate(&mut adj, a, g.slice_cols(0, ca));
                    accumulate(&mut adj, b, g.slice_cols(ca, v(b).cols()));
                }
            }
        }
        Ok(Gradients { tape_id: self.id, adj })
    }

    /// Record forward-mode tangents of `outputs` given tangent nodes for each
    /// seed. The tangents are ordinary nodes, so they can be swept backwards
    /// like anything else on the log.
    pub fn jvp<'t>(&'t self, seeds: &[(Var<'t>, Var<'t>)], outputs: &[Var<'t>]) -> Result<Vec<Var<'t>>, AdError> {
        let from = seeds.iter().map(|(s, _)| s.id).min().unwrap_or(0);
        self.jvp_from(from, seeds, outputs)
    }

    /// As [`Tape::jvp`], but only nodes with id ≥ `scan_from` are visited.
    /// Nodes below that point other than the seeds are assumed tangent-free.
    pub fn jvp_from<'t>(
        &'t self,
        scan_from: NodeId,
        seeds: &[(Var<'t>, Var<'t>)],
        outputs: &[Var<'t>],
    ) -> Result<Vec<Var<'t>>, AdError> {
        let mut tan: HashMap<NodeId, NodeId> = HashMap::new();
        for (s, t) in seeds {
            self.assert_owns(*s);
            self.assert_owns(*t);
            if self.shape(*s) != self.shape(*t) {
                return Err(AdError::ShapeMismatch {
                    op: "tangent seed",
                    lhs: self.shape(*s),
                    rhs: self.shape(*t),
                });
            }
            tan.insert(s.id, t.id);
        }
        let end = outputs.iter().map(|o| o.id + 1).max().unwrap_or(0);
        let seed_ids: Vec<NodeId> = seeds.iter().map(|(s, _)| s.id).collect();
        for id in scan_from..end {
            if seed_ids.contains(&id) {
                continue;
            }
            let op = self.op(id);
            let (a, b) = op.operands();
            let ta = a.and_then(|a| tan.get(&a).copied()).map(|t| self.var(t));
            let tb = b.and_then(|b| tan.get(&b).copied()).map(|t| self.var(t));
            if ta.is_none() && tb.is_none() {
                continue;
            }
            let t = self.tangent_rule(id, &op, ta, tb)?;
            tan.insert(id, t.id);
        }
        Ok(outputs
            .iter()
            .map(|o| match tan.get(&o.id) {
                Some(&t) => self.var(t),
                None => {
                    let (r, c) = self.shape(*o);
                    self.constant(Tensor::zeros(r, c))
                }
            })
            .collect())
    }

    fn tangent_rule<'t>(
        &'t self,
        id: NodeId,
        op: &Op,
        ta: Option<Var<'t>>,
        tb: Option<Var<'t>>,
    ) -> Result<Var<'t>, AdError> {
        use Op::*;
        let out = self.var(id);
        let zeros_like = |n: NodeId| {
            let (r, c) = self.shape(self.var(n));
            self.constant(Tensor::zeros(r, c))
        };
        let one = |t: Option<Var<'t>>| t.expect("unary op with tangent");
        let t = match *op {
            Leaf(_) => unreachable!("leaves only carry tangents as seeds"),
            Add(..) => match (ta, tb) {
                (Some(x), Some(y)) => x + y,
                (Some(x), None) | (None, Some(x)) => x,
                (None, None) => unreachable!(),
            },
            Sub(..) => match (ta, tb) {
                (Some(x), Some(y)) => x - y,
                (Some(x), None) => x,
                (None, Some(y)) => -y,
                (None, None) => unreachable!(),
            },
            Mul(a, b) => {
                let (a, b) = (self.var(a), self.var(b));
                match (ta, tb) {
                    (Some(x), Some(y)) => x * b + a * y,
                    (Some(x), None) => x * b,
                    (None, Some(y)) => a * y,
                    (None, None) => unreachable!(),
                }
            }
            Div(_, b) => {
                let b = self.var(b);
                match (ta, tb) {
                    (Some(x), Some(y)) => (x - out * y) / b,
                    (Some(x), None) => x / b,
                    (None, Some(y)) => -(out * y) / b,
                    (None, None) => unreachable!(),
                }
            }
            Neg(_) => -one(ta),
            Scale(_, c) => one(ta).scale(c),
            AddScalar(..) => one(ta),
            Sin(a) => self.var(a).cos() * one(ta),
            Cos(a) => -(self.var(a).sin() * one(ta)),
            Tanh(_) => {
                let x = one(ta);
                x - out * out * x
            }
            Exp(_) => out * one(ta),
            Ln(a) => one(ta) / self.var(a),
            Sqrt(_) => (one(ta) / out).scale(0.5),
            Abs(_) | Relu(_) => {
                return Err(AdError::NoSecondOrder {
                    node: id,
                    op: op.name(),
                });
            }
            MatMul(a, b) => {
                let (a, b) = (self.var(a), self.var(b));
                match (ta, tb) {
                    (Some(x), Some(y)) => x.matmul(b) + a.matmul(y),
                    (Some(x), None) => x.matmul(b),
                    (None, Some(y)) => a.matmul(y),
                    (None, None) => unreachable!(),
                }
            }
            Transpose(_) => one(ta).t(),
            Sum(_) => one(ta).sum(),
            SumRows(_) => one(ta).sum_rows(),
            SumCols(_) => one(ta).sum_cols(),
            BroadcastRows(_, n) => one(ta).broadcast_rows(n),
            BroadcastCols(_, n) => one(ta).broadcast_cols(n),
            Reshape(_, r, c) => one(ta).reshape(r, c),
            SliceCols(_, s, l) => one(ta).slice_cols(s, l),
            ConcatCols(a, b) => {
                let x = ta.unwrap_or_else(|| zeros_like(a));
                let y = tb.unwrap_or_else(|| zeros_like(b));
                x.concat_cols(y)
            }
        };
        Ok(t)
    }

    pub(crate) fn snapshot_ops(&self, upto: usize) -> (Vec<Op>, Vec<Option<Tensor>>) {
        let inner = self.inner.borrow();
        let ops = inner.nodes[..upto].iter().map(|n| n.op.clone()).collect();
        let leaves = inner.nodes[..upto]
            .iter()
            .map(|n| matches!(n.op, Op::Leaf(_)).then(|| n.value.clone()))
            .collect();
        (ops, leaves)
    }

    pub(crate) fn push_leaf_raw(&self, kind: LeafKind, value: Tensor) -> NodeId {
        self.leaf(kind, value).id
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut adj[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Adjoints from one reverse sweep.
pub struct Gradients {
    tape_id: u64,
    adj: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of `var`, or `None` when the seeds do not depend on it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        assert_eq!(
            self.tape_id,
            var.tape.id(),
            "gradient lookup with a value from another recording context"
        );
        self.adj.get(var.id).and_then(|g| g.as_ref())
    }

    /// Adjoint of `var`, zero-filled when absent.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = var.tape.shape(var);
                Tensor::zeros(r, c)
            }
        }
    }
}

/// Handle to a recorded value.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(tape={}, node={})", self.tape.id, self.id)
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(*self)
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.shape(*self)
    }

    fn same_tape(&self, other: Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "values from different recording contexts cannot be combined (tape {} vs {})",
            self.tape.id,
            other.tape.id
        );
    }

    fn unary(self, op: Op) -> Var<'t> {
        self.tape.push(op)
    }

    fn binary(self, other: Var<'t>, op: Op) -> Var<'t> {
        self.same_tape(other);
        self.tape.push(op)
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(Op::Sin(self.id))
    }
    pub fn cos(self) -> Var<'t> {
        self.unary(Op::Cos(self.id))
    }
    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id))
    }
    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id))
    }
    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Ln(self.id))
    }
    pub fn sqrt(self) -> Var<'t> {
        self.unary(Op::Sqrt(self.id))
    }
    pub fn abs(self) -> Var<'t> {
        self.unary(Op::Abs(self.id))
    }
    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id))
    }
    pub fn square(self) -> Var<'t> {
        self * self
    }
    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c))
    }
    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id, c))
    }
    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::MatMul(self.id, other.id))
    }
    pub fn t(self) -> Var<'t> {
        self.unary(Op::Transpose(self.id))
    }
    pub fn sum(self) -> Var<'t> {
        self.unary(Op::Sum(self.id))
    }
    /// Column sums (1×cols).
    pub fn sum_rows(self) -> Var<'t> {
        self.unary(Op::SumRows(self.id))
    }
    /// Row sums (rows×1).
    pub fn sum_cols(self) -> Var<'t> {
        self.unary(Op::SumCols(self.id))
    }
    pub fn broadcast_rows(self, n: usize) -> Var<'t> {
        self.unary(Op::BroadcastRows(self.id, n))
    }
    pub fn broadcast_cols(self, n: usize) -> Var<'t> {
        self.unary(Op::BroadcastCols(self.id, n))
    }
    pub fn reshape(self, rows: usize, cols: usize) -> Var<'t> {
        self.unary(Op::Reshape(self.id, rows, cols))
    }
    pub fn slice_cols(self, start: usize, len: usize) -> Var<'t> {
        self.unary(Op::SliceCols(self.id, start, len))
    }
    pub fn concat_cols(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::ConcatCols(self.id, other.id))
    }

    /// Shape-checked variant of the binary operators.
    pub fn try_binary(self, other: Var<'t>, kind: BinaryKind) -> Result<Var<'t>, AdError> {
        if !std::ptr::eq(self.tape, other.tape) {
            return Err(AdError::ForeignValue);
        }
        let (a, b) = (self.id, other.id);
        let op = match kind {
            BinaryKind::Add => Op::Add(a, b),
            BinaryKind::Sub => Op::Sub(a, b),
            BinaryKind::Mul => Op::Mul(a, b),
            BinaryKind::Div => Op::Div(a, b),
            BinaryKind::MatMul => Op::MatMul(a, b),
        };
        self.tape.push_checked(op)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl<'t> $trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.binary(rhs, Op::$variant(self.id, rhs.id))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(Op::Neg(self.id))
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.scale(c)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.add_scalar(c)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.add_scalar(-c)
    }
}
