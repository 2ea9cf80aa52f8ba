//! Reverse-mode differentiation and its finite-difference checker.

mod gradcheck;
mod tape;

pub use gradcheck::{
    central_difference, finite_diff_check, finite_diff_check_on, GradCheckReport, ParamCheck,
    SCALE_FLOOR,
};
pub use tape::{ElementwiseOp, Gradients, NodeId, OpKind, Tape, Var};

use crate::error::Result;
use crate::tensor::{self, Tensor};

/// The operations a model forward pass needs, implemented both eagerly on
/// plain tensors ([`Eager`]) and on a recording [`Tape`]. Writing a forward
/// pass once against this trait guarantees both paths run the same kernels
/// in the same order.
pub trait Compute {
    type Value: Clone;

    fn matmul(&self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&self, x: &Self::Value, c: f64) -> Result<Self::Value>;
    fn gelu(&self, x: &Self::Value) -> Result<Self::Value>;
    fn layer_norm(&self, x: &Self::Value, eps: f64) -> Result<Self::Value>;
    fn softmax_last(&self, x: &Self::Value) -> Result<Self::Value>;
    fn reshape(&self, x: &Self::Value, shape: &[usize]) -> Result<Self::Value>;
    fn permute(&self, x: &Self::Value, axes: &[usize]) -> Result<Self::Value>;
    fn stack(&self, parts: &[Self::Value], axis: usize) -> Result<Self::Value>;
    fn shape(&self, x: &Self::Value) -> Vec<usize>;
}

/// Untracked evaluation on owned tensors.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

impl Compute for Eager {
    type Value = Tensor;

    fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        tensor::matmul(a, b)
    }

    fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        tensor::binary("add", a, b, |x, y| x + y)
    }

    fn scale(&self, x: &Tensor, c: f64) -> Result<Tensor> {
        Ok(x.map(|v| v * c))
    }

    fn gelu(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.map(tensor::gelu))
    }

    fn layer_norm(&self, x: &Tensor, eps: f64) -> Result<Tensor> {
        tensor::layer_norm_last(x, eps).map(|(y, _)| y)
    }

    fn softmax_last(&self, x: &Tensor) -> Result<Tensor> {
        tensor::softmax_last(x)
    }

    fn reshape(&self, x: &Tensor, shape: &[usize]) -> Result<Tensor> {
        x.reshape(shape)
    }

    fn permute(&self, x: &Tensor, axes: &[usize]) -> Result<Tensor> {
        tensor::permute(x, axes)
    }

    fn stack(&self, parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let refs: Vec<&Tensor> = parts.iter().collect();
        tensor::stack(&refs, axis)
    }

    fn shape(&self, x: &Tensor) -> Vec<usize> {
        x.shape().to_vec()
    }
}

impl Compute for Tape {
    type Value = Var;

    fn matmul(&self, a: &Var, b: &Var) -> Result<Var> {
        Tape::matmul(self, *a, *b)
    }

    fn add(&self, a: &Var, b: &Var) -> Result<Var> {
        Tape::add(self, *a, *b)
    }

    fn scale(&self, x: &Var, c: f64) -> Result<Var> {
        Tape::scale(self, *x, c)
    }

    fn gelu(&self, x: &Var) -> Result<Var> {
        Tape::gelu(self, *x)
    }

    fn layer_norm(&self, x: &Var, eps: f64) -> Result<Var> {
        Tape::layer_norm(self, *x, eps)
    }

    fn softmax_last(&self, x: &Var) -> Result<Var> {
        Tape::softmax_last(self, *x)
    }

    fn reshape(&self, x: &Var, shape: &[usize]) -> Result<Var> {
        Tape::reshape(self, *x, shape)
    }

    fn permute(&self, x: &Var, axes: &[usize]) -> Result<Var> {
        Tape::permute(self, *x, axes)
    }

    fn stack(&self, parts: &[Var], axis: usize) -> Result<Var> {
        Tape::stack(self, parts, axis)
    }

    fn shape(&self, x: &Var) -> Vec<usize> {
        Tape::shape(self, *x)
    }
}
