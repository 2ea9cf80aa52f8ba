//! Pre-norm transformer encoder blocks written once against [`Compute`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Compute;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// feature dimension of the frontend input (number of mel bands)
    pub input_dim: usize,
    pub model_dim: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    /// hidden width of each block's MLP
    pub mlp_dim: usize,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn teacher() -> Self {
        Self {
            input_dim: 40,
            model_dim: 32,
            n_blocks: 12,
            n_heads: 4,
            mlp_dim: 64,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.model_dim == 0 || self.mlp_dim == 0 || self.n_heads == 0 {
            return Err(Error::Argument(format!("zero dimension in {self:?}")));
        }
        if self.model_dim % self.n_heads != 0 {
            return Err(Error::Argument(format!(
                "model_dim {} is not divisible by n_heads {}",
                self.model_dim, self.n_heads
            )));
        }
        Ok(())
    }
}

/// `y = x·W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: T,
    pub bias: T,
}

impl Linear<Tensor> {
    pub(crate) fn uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            weight: Tensor::new(&[fan_in, fan_out], w).expect("sized"),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub(crate) fn identity(dim: usize) -> Self {
        Self {
            weight: Tensor::eye(dim),
            bias: Tensor::zeros(&[dim]),
        }
    }
}

impl<T> Linear<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Linear<U> {
        Linear {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a T)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut T>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }

    pub(crate) fn forward<C: Compute<Value = T>>(&self, c: &C, x: &T) -> Result<T> {
        let y = c.matmul(x, &self.weight)?;
        c.add(&y, &self.bias)
    }
}

/// Self-attention and MLP sub-layers of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub out: Linear<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

impl Block<Tensor> {
    pub(crate) fn init<R: Rng>(rng: &mut R, d: usize, mlp: usize) -> Self {
        Self {
            query: Linear::uniform(rng, d, d),
            key: Linear::uniform(rng, d, d),
            value: Linear::uniform(rng, d, d),
            out: Linear::uniform(rng, d, d),
            fc1: Linear::uniform(rng, d, mlp),
            fc2: Linear::uniform(rng, mlp, d),
        }
    }
}

impl<T> Block<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Block<U> {
        Block {
            query: self.query.map(f),
            key: self.key.map(f),
            value: self.value.map(f),
            out: self.out.map(f),
            fc1: self.fc1.map(f),
            fc2: self.fc2.map(f),
        }
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a T)>) {
        self.query.visit(&format!("{prefix}.attn.query"), out);
        self.key.visit(&format!("{prefix}.attn.key"), out);
        self.value.visit(&format!("{prefix}.attn.value"), out);
        self.out.visit(&format!("{prefix}.attn.out"), out);
        self.fc1.visit(&format!("{prefix}.mlp.fc1"), out);
        self.fc2.visit(&format!("{prefix}.mlp.fc2"), out);
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut T>) {
        self.query.visit_mut(out);
        self.key.visit_mut(out);
        self.value.visit_mut(out);
        self.out.visit_mut(out);
        self.fc1.visit_mut(out);
        self.fc2.visit_mut(out);
    }

    /// `x: [B, T, D] → [B, T, D]`
    pub(crate) fn forward<C: Compute<Value = T>>(&self, c: &C, x: &T, n_heads: usize) -> Result<T> {
        let shape = c.shape(x);
        let (b, t, d) = (shape[0], shape[1], shape[2]);
        let dh = d / n_heads;

        let h = c.layer_norm(x, LN_EPS)?;
        let split = |v: &T, axes: &[usize]| -> Result<T> {
            let v = c.reshape(v, &[b, t, n_heads, dh])?;
            c.permute(&v, axes)
        };
        let q = split(&self.query.forward(c, &h)?, &[0, 2, 1, 3])?;
        let k_t = split(&self.key.forward(c, &h)?, &[0, 2, 3, 1])?;
        let v = split(&self.value.forward(c, &h)?, &[0, 2, 1, 3])?;
        let scores = c.scale(&c.matmul(&q, &k_t)?, 1.0 / (dh as f64).sqrt())?;
        let attn = c.softmax_last(&scores)?;
        let ctx = c.matmul(&attn, &v)?;
        let ctx = c.reshape(&c.permute(&ctx, &[0, 2, 1, 3])?, &[b, t, d])?;
        let x = c.add(x, &self.out.forward(c, &ctx)?)?;

        let h = c.layer_norm(&x, LN_EPS)?;
        let m = self.fc2.forward(c, &c.gelu(&self.fc1.forward(c, &h)?)?)?;
        c.add(&x, &m)
    }
}

/// Accept `[T, F]` or `[B, T, F]` features; return the batched shape.
pub(crate) fn batched_shape(shape: &[usize], input_dim: usize) -> Result<[usize; 3]> {
    let s = match *shape {
        [t, f] => [1, t, f],
        [b, t, f] => [b, t, f],
        _ => {
            return Err(Error::Argument(format!(
                "features must be T×F or B×T×F, got {shape:?}"
            )))
        }
    };
    if s[2] != input_dim {
        return Err(Error::shape("frontend", shape, &[input_dim]));
    }
    Ok(s)
}
