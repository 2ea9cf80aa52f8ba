use crate::autodiff::{Compute, Eager};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::Tensor;

use super::encoder::{batched_shape, Block, EncoderConfig, Linear};

/// Forward the frontend and every block, returning each block's output.
pub(crate) fn encode<C: Compute>(
    c: &C,
    frontend: &Linear<C::Value>,
    blocks: &[Block<C::Value>],
    n_heads: usize,
    x: &C::Value,
) -> Result<Vec<C::Value>> {
    let mut h = frontend.forward(c, x)?;
    let mut out = Vec::with_capacity(blocks.len());
    for block in blocks {
        h = block.forward(c, &h, n_heads)?;
        out.push(h.clone());
    }
    Ok(out)
}

/// Hidden layers a teacher of `n_blocks` exposes as distillation targets:
/// one third, two thirds and all of the way up.
pub fn target_layers(n_blocks: usize) -> Result<[usize; 3]> {
    if n_blocks < 3 || n_blocks % 3 != 0 {
        return Err(Error::Argument(format!(
            "teacher depth {n_blocks} must be a positive multiple of 3"
        )));
    }
    Ok([n_blocks / 3, 2 * n_blocks / 3, n_blocks])
}

/// Frozen encoder. Nothing here records onto a tape, and no method takes
/// `&mut self`, so parameters cannot change after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherModel {
    config: EncoderConfig,
    frontend: Linear<Tensor>,
    blocks: Vec<Block<Tensor>>,
}

impl TeacherModel {
    /// Random initialization drawn from `config.seed`.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        target_layers(config.n_blocks)?;
        let mut rng = rng_for(config.seed, &[0x7eac]);
        let frontend = Linear::uniform(&mut rng, config.input_dim, config.model_dim);
        let blocks = (0..config.n_blocks)
            .map(|_| Block::init(&mut rng, config.model_dim, config.mlp_dim))
            .collect();
        Ok(Self {
            config,
            frontend,
            blocks,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn frontend(&self) -> &Linear<Tensor> {
        &self.frontend
    }

    pub fn blocks(&self) -> &[Block<Tensor>] {
        &self.blocks
    }

    pub fn target_layers(&self) -> [usize; 3] {
        target_layers(self.config.n_blocks).expect("validated at construction")
    }

    /// Output of every block, in order. Each has the batch layout of `features`
    /// (`[T, D]` for `[T, F]` input, `[B, T, D]` for `[B, T, F]`).
    pub fn hidden_states(&self, features: &Tensor) -> Result<Vec<Tensor>> {
        let [b, t, f] = batched_shape(features.shape(), self.config.input_dim)?;
        let x = features.reshape(&[b, t, f])?;
        let hs = encode(&Eager, &self.frontend, &self.blocks, self.config.n_heads, &x)?;
        if features.rank() == 2 {
            hs.into_iter()
                .map(|h| h.reshape(&[t, self.config.model_dim]))
                .collect()
        } else {
            Ok(hs)
        }
    }

    /// The three target layers `[h^{N/3}, h^{2N/3}, h^N]`.
    pub fn forward(&self, features: &Tensor) -> Result<[Tensor; 3]> {
        let mut hs = self.hidden_states(features)?;
        let [a, b, c] = self.target_layers();
        let take = |hs: &mut Vec<Tensor>, l: usize| std::mem::replace(&mut hs[l - 1], Tensor::scalar(0.0));
        Ok([take(&mut hs, a), take(&mut hs, b), take(&mut hs, c)])
    }

    /// Targets stacked as `[B, P, T, D]` for a `[B, T, F]` batch.
    pub fn targets(&self, features: &Tensor) -> Result<Tensor> {
        if features.rank() != 3 {
            return Err(Error::Argument(format!(
                "targets expects B×T×F features, got {:?}",
                features.shape()
            )));
        }
        let hs = self.forward(features)?;
        Eager.stack(&hs, 1)
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.frontend.visit("frontend", &mut out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("blocks.{i}"), &mut out);
        }
        out
    }
}
