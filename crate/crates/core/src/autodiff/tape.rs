//! Reverse-mode gradient tape over [`Tensor`] values.
//!
//! A [`Tape`] records every operation as a node in creation order, which is
//! already a topological order. [`Tape::backward`] walks the nodes once in
//! reverse. Tapes are meant to live for one training step.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    id: NodeId,
}

impl Var {
    pub fn id(self) -> NodeId {
        self.id
    }
}

/// Elementwise primitives exposed through [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    /// Sum of absolute values along the last axis.
    L1Norm,
    Square,
    Log,
    Sigmoid,
}

/// Discriminant of a recorded operation; used to name rules and to inject
/// faults into a single backward rule when exercising the checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    AddScalar,
    Square,
    Sqrt,
    Log,
    Sigmoid,
    Abs,
    Gelu,
    SumAll,
    SumAxis,
    MatMul,
    Reshape,
    Permute,
    Stack,
    Softmax,
    LayerNorm,
    Standardize,
    BatchedOuter,
}

impl OpKind {
    pub const ALL: [OpKind; 23] = [
        OpKind::Leaf,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Scale,
        OpKind::AddScalar,
        OpKind::Square,
        OpKind::Sqrt,
        OpKind::Log,
        OpKind::Sigmoid,
        OpKind::Abs,
        OpKind::Gelu,
        OpKind::SumAll,
        OpKind::SumAxis,
        OpKind::MatMul,
        OpKind::Reshape,
        OpKind::Permute,
        OpKind::Stack,
        OpKind::Softmax,
        OpKind::LayerNorm,
        OpKind::Standardize,
        OpKind::BatchedOuter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Scale => "scale",
            OpKind::AddScalar => "add_scalar",
            OpKind::Square => "square",
            OpKind::Sqrt => "sqrt",
            OpKind::Log => "log",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Abs => "abs",
            OpKind::Gelu => "gelu",
            OpKind::SumAll => "sum_all",
            OpKind::SumAxis => "sum_axis",
            OpKind::MatMul => "matmul",
            OpKind::Reshape => "reshape",
            OpKind::Permute => "permute",
            OpKind::Stack => "stack",
            OpKind::Softmax => "softmax",
            OpKind::LayerNorm => "layer_norm",
            OpKind::Standardize => "standardize",
            OpKind::BatchedOuter => "batched_outer",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown op `{s}`")))
    }
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Square(Var),
    Sqrt(Var),
    Log(Var),
    Sigmoid(Var),
    Abs(Var),
    Gelu(Var),
    SumAll(Var),
    SumAxis(Var, usize),
    MatMul(Var, Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Stack(Vec<Var>, usize),
    Softmax(Var),
    LayerNorm(Var, Vec<f64>),
    Standardize {
        x: Var,
        scale: Vec<f64>,
        mean_only: bool,
    },
    BatchedOuter(Var, Var),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Div(..) => OpKind::Div,
            Op::Scale(..) => OpKind::Scale,
            Op::AddScalar(..) => OpKind::AddScalar,
            Op::Square(..) => OpKind::Square,
            Op::Sqrt(..) => OpKind::Sqrt,
            Op::Log(..) => OpKind::Log,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Abs(..) => OpKind::Abs,
            Op::Gelu(..) => OpKind::Gelu,
            Op::SumAll(..) => OpKind::SumAll,
            Op::SumAxis(..) => OpKind::SumAxis,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Reshape(..) => OpKind::Reshape,
            Op::Permute(..) => OpKind::Permute,
            Op::Stack(..) => OpKind::Stack,
            Op::Softmax(..) => OpKind::Softmax,
            Op::LayerNorm(..) => OpKind::LayerNorm,
            Op::Standardize { .. } => OpKind::Standardize,
            Op::BatchedOuter(..) => OpKind::BatchedOuter,
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of a scalar loss with respect to the leaves that require them.
#[derive(Debug, Default)]
pub struct Gradients {
    by_node: HashMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_node.get(&v.id)
    }

    /// Gradient for `v`, or zeros of `shape` when no path reaches it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &Tensor)> {
        self.by_node.iter()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    sign_fault: Option<OpKind>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose backward rule for `kind` returns the negated gradient.
    /// Exists only so the gradient checker can be shown to catch a broken rule.
    #[doc(hidden)]
    pub fn with_sign_fault(kind: OpKind) -> Self {
        Self {
            nodes: RefCell::default(),
            sign_fault: Some(kind),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Record a leaf. Only leaves with `requires_grad` receive gradients.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A new constant leaf holding the current value of `v`; no gradient
    /// flows back through it.
    pub fn detach(&self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.id.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.id.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.id.0].requires_grad
    }

    pub fn item(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            id: NodeId(nodes.len() - 1),
        }
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.id.0].requires_grad)
    }

    fn unary(&self, x: Var, op: Op, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<Var> {
        let out = f(&self.value(x))?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, op, rg))
    }

    fn binary_op(
        &self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let out = tensor::binary(name, &self.value(a), &self.value(b), f)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn elementwise(&self, op: ElementwiseOp, a: Var, b: Option<Var>) -> Result<Var> {
        let rhs = || {
            b.ok_or_else(|| Error::Argument(format!("{op:?} needs a second operand")))
        };
        match op {
            ElementwiseOp::Add => self.add(a, rhs()?),
            ElementwiseOp::Sub => self.sub(a, rhs()?),
            ElementwiseOp::Mul => self.mul(a, rhs()?),
            ElementwiseOp::L1Norm => {
                let abs = self.abs(a)?;
                self.sum_last(abs)
            }
            ElementwiseOp::Square => self.square(a),
            ElementwiseOp::Log => self.log(a),
            ElementwiseOp::Sigmoid => self.sigmoid(a),
        }
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_op("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_op("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_op("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_op("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, Op::Scale(x, c), |t| Ok(t.map(|v| v * c)))
    }

    pub fn add_scalar(&self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, Op::AddScalar(x), |t| Ok(t.map(|v| v + c)))
    }

    pub fn square(&self, x: Var) -> Result<Var> {
        self.unary(x, Op::Square(x), |t| Ok(t.map(|v| v * v)))
    }

    pub fn sqrt(&self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sqrt(x), |t| Ok(t.map(f64::sqrt)))
    }

    pub fn log(&self, x: Var) -> Result<Var> {
        self.unary(x, Op::Log(x), |t| Ok(t.map(f64::ln)))
    }

    pub fn sigmoid(&self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid(x), |t| Ok(t.map(tensor::sigmoid)))
    }

    pub fn abs(&self, x: Var) -> Result<Var> {
        self.unary(x, Op::Abs(x), |t| Ok(t.map(f64::abs)))
    }

    pub fn gelu(&self, x: Var) -> Result<Var> {
        self.unary(x, Op::Gelu(x), |t| Ok(t.map(tensor::gelu)))
    }

    pub fn sum(&self, x: Var) -> Result<Var> {
        self.unary(x, Op::SumAll(x), |t| Ok(Tensor::scalar(t.sum())))
    }

    pub fn mean(&self, x: Var) -> Result<Var> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    pub fn sum_axis(&self, x: Var, axis: usize) -> Result<Var> {
        self.unary(x, Op::SumAxis(x, axis), |t| tensor::sum_axis(t, axis))
    }

    pub fn sum_last(&self, x: Var) -> Result<Var> {
        let rank = self.value(x).rank();
        if rank == 0 {
            return Err(Error::Argument("sum_last on a scalar".into()));
        }
        self.sum_axis(x, rank - 1)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(&self.value(a), &self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        self.unary(x, Op::Reshape(x), |t| t.reshape(shape))
    }

    pub fn permute(&self, x: Var, axes: &[usize]) -> Result<Var> {
        self.unary(x, Op::Permute(x, axes.to_vec()), |t| tensor::permute(t, axes))
    }

    pub fn transpose_last2(&self, x: Var) -> Result<Var> {
        let r = self.value(x).rank();
        if r < 2 {
            return Err(Error::Argument(format!("transpose of rank-{r} tensor")));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(x, &axes)
    }

    pub fn stack(&self, parts: &[Var], axis: usize) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let refs: Vec<&Tensor> = parts.iter().map(|v| &nodes[v.id.0].value).collect();
            tensor::stack(&refs, axis)?
        };
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::Stack(parts.to_vec(), axis), rg))
    }

    pub fn softmax_last(&self, x: Var) -> Result<Var> {
        self.unary(x, Op::Softmax(x), tensor::softmax_last)
    }

    /// Zero-mean unit-variance normalization over the last axis, no affine.
    pub fn layer_norm(&self, x: Var, eps: f64) -> Result<Var> {
        let (out, inv) = tensor::layer_norm_last(&self.value(x), eps)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::LayerNorm(x, inv), rg))
    }

    /// Standardize along the leading (batch) axis. With `mean_only` the
    /// variance scaling is skipped.
    pub fn batch_standardize(&self, x: Var, eps: f64, mean_only: bool) -> Result<Var> {
        let (out, scale) = tensor::standardize_batch(&self.value(x), eps, mean_only)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            out,
            Op::Standardize {
                x,
                scale,
                mean_only,
            },
            rg,
        ))
    }

    /// `[B, rest.., D] × [B, rest.., D] → [rest.., D, D]`, averaged over `B`.
    pub fn batched_outer(&self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::batched_outer(&self.value(a), &self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::BatchedOuter(a, b), rg))
    }

    /// Gradients of the scalar `loss` with respect to every leaf that
    /// requires them and is reachable from `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes
            .get(loss.id.0)
            .ok_or_else(|| Error::Contract("loss is not on this tape".into()))?
            .value;
        if !root.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.id.0).map(|_| None).collect();
        grads[loss.id.0] = Some(Tensor::full(root.shape(), 1.0));
        let mut out = Gradients::default();

        for id in (0..=loss.id.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let contributions = self.local_grads(&nodes, node, &g);
            if matches!(node.op, Op::Leaf) {
                out.by_node.insert(NodeId(id), g);
                continue;
            }
            for (input, mut gi) in contributions {
                if !nodes[input.id.0].requires_grad {
                    continue;
                }
                if self.sign_fault == Some(node.op.kind()) {
                    gi.data_mut().iter_mut().for_each(|v| *v = -*v);
                }
                match &mut grads[input.id.0] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(gi.data())
                        .for_each(|(a, b)| *a += b),
                    slot => *slot = Some(gi),
                }
            }
        }
        Ok(out)
    }

    fn local_grads(&self, nodes: &[Node], node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let val = |v: &Var| &nodes[v.id.0].value;
        let needs = |v: &Var| nodes[v.id.0].requires_grad;
        let zip = |x: &Tensor, f: &dyn Fn(f64, f64) -> f64| -> Tensor {
            let data = x.data().iter().zip(g.data()).map(|(&a, &b)| f(a, b)).collect();
            Tensor::new(x.shape(), data).expect("same shape")
        };
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => vec![
                (*a, tensor::reduce_to(g, val(a).shape())),
                (*b, tensor::reduce_to(g, val(b).shape())),
            ],
            Op::Sub(a, b) => vec![
                (*a, tensor::reduce_to(g, val(a).shape())),
                (*b, tensor::reduce_to(&g.map(|v| -v), val(b).shape())),
            ],
            Op::Mul(a, b) => {
                let mut v = Vec::with_capacity(2);
                if needs(a) {
                    let ga = tensor::binary("mul", g, val(b), |x, y| x * y).expect("checked");
                    v.push((*a, tensor::reduce_to(&ga, val(a).shape())));
                }
                if needs(b) {
                    let gb = tensor::binary("mul", g, val(a), |x, y| x * y).expect("checked");
                    v.push((*b, tensor::reduce_to(&gb, val(b).shape())));
                }
                v
            }
            Op::Div(a, b) => {
                let mut v = Vec::with_capacity(2);
                if needs(a) {
                    let ga = tensor::binary("div", g, val(b), |x, y| x / y).expect("checked");
                    v.push((*a, tensor::reduce_to(&ga, val(a).shape())));
                }
                if needs(b) {
                    // d(a/b)/db = -(a/b)/b = -out/b
                    let t = tensor::binary("mul", g, &node.value, |x, y| x * y).expect("checked");
                    let gb = tensor::binary("div", &t, val(b), |x, y| -x / y).expect("checked");
                    v.push((*b, tensor::reduce_to(&gb, val(b).shape())));
                }
                v
            }
            Op::Scale(x, c) => vec![(*x, g.map(|v| v * c))],
            Op::AddScalar(x) => vec![(*x, g.clone())],
            Op::Square(x) => vec![(*x, zip(val(x), &|a, gv| 2.0 * a * gv))],
            Op::Sqrt(x) => vec![(*x, zip(&node.value, &|y, gv| gv * 0.5 / y))],
            Op::Log(x) => vec![(*x, zip(val(x), &|a, gv| gv / a))],
            Op::Sigmoid(x) => vec![(*x, zip(&node.value, &|s, gv| gv * s * (1.0 - s)))],
            Op::Abs(x) => vec![(*x, zip(val(x), &|a, gv| gv * sign(a)))],
            Op::Gelu(x) => vec![(*x, zip(val(x), &|a, gv| gv * tensor::gelu_grad(a)))],
            Op::SumAll(x) => {
                let gv = g.data()[0];
                vec![(*x, Tensor::full(val(x).shape(), gv))]
            }
            Op::SumAxis(x, axis) => vec![(*x, tensor::expand_axis(g, val(x).shape(), *axis))],
            Op::MatMul(a, b) => {
                let (ga, gb) = tensor::matmul_backward(val(a), val(b), g);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Reshape(x) => vec![(*x, g.reshape(val(x).shape()).expect("same size"))],
            Op::Permute(x, axes) => {
                let inv = tensor::inverse_permutation(axes);
                vec![(*x, tensor::permute(g, &inv).expect("valid permutation"))]
            }
            Op::Stack(parts, axis) => parts
                .iter()
                .copied()
                .zip(tensor::unstack(g, *axis, parts.len()))
                .collect(),
            Op::Softmax(x) => vec![(*x, tensor::softmax_last_backward(&node.value, g))],
            Op::LayerNorm(x, inv) => {
                vec![(*x, tensor::layer_norm_last_backward(&node.value, inv, g))]
            }
            Op::Standardize {
                x,
                scale,
                mean_only,
            } => vec![(
                *x,
                tensor::standardize_batch_backward(&node.value, scale, *mean_only, g),
            )],
            Op::BatchedOuter(a, b) => {
                let (ga, gb) = tensor::batched_outer_backward(val(a), val(b), g);
                vec![(*a, ga), (*b, gb)]
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
