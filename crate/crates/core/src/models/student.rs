use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Compute, Eager, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::Tensor;

use super::encoder::{batched_shape, Block, EncoderConfig, Linear};
use super::teacher::{encode, TeacherModel};

/// One prediction head per teacher target layer.
pub const N_HEADS_PRED: usize = 3;
pub const STUDENT_BLOCKS: usize = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInit {
    /// `U(-1/√D, 1/√D)` weights, zero bias
    #[default]
    Uniform,
    /// identity weights, zero bias
    Identity,
}

impl FromStr for HeadInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "identity" => Ok(Self::Identity),
            _ => Err(Error::Argument(format!(
                "unknown head init {s:?} (expected uniform or identity)"
            ))),
        }
    }
}

impl fmt::Display for HeadInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Identity => "identity",
        })
    }
}

/// Student parameters, generic so the same layout holds tensors or tape handles.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentParams<T> {
    pub frontend: Linear<T>,
    pub blocks: Vec<Block<T>>,
    pub heads: Vec<Linear<T>>,
}

impl<T> StudentParams<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> StudentParams<U> {
        StudentParams {
            frontend: self.frontend.map(&mut f),
            blocks: self.blocks.iter().map(|b| b.map(&mut f)).collect(),
            heads: self.heads.iter().map(|h| h.map(&mut f)).collect(),
        }
    }

    /// Every parameter with a dotted name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.frontend.visit("frontend", &mut out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("blocks.{i}"), &mut out);
        }
        for (i, h) in self.heads.iter().enumerate() {
            h.visit(&format!("heads.{i}"), &mut out);
        }
        out
    }

    /// Same layout with leaves taken from `values` in [`named`](Self::named) order.
    pub fn with_values<U: Clone>(&self, values: &[U]) -> Result<StudentParams<U>> {
        let n = self.named().len();
        if values.len() != n {
            return Err(Error::Argument(format!(
                "student layout has {n} parameters, got {}",
                values.len()
            )));
        }
        let mut next = values.iter();
        Ok(self.map(|_| next.next().expect("counted").clone()))
    }

    /// Same order as [`named`](Self::named).
    pub fn iter_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        self.frontend.visit_mut(&mut out);
        for b in &mut self.blocks {
            b.visit_mut(&mut out);
        }
        for h in &mut self.heads {
            h.visit_mut(&mut out);
        }
        out
    }
}

/// Result of a recorded student forward pass.
pub struct StudentForward {
    /// tape handles of every parameter, for reading gradients
    pub params: StudentParams<Var>,
    /// last hidden state
    pub z: Var,
    /// head predictions, `[P, T, D]` or `[B, P, T, D]`
    pub predictions: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudentModel {
    config: EncoderConfig,
    params: StudentParams<Tensor>,
}

fn fresh_heads(dim: usize, init: HeadInit, seed: u64) -> Vec<Linear<Tensor>> {
    let mut rng = rng_for(seed, &[0x4ead]);
    (0..N_HEADS_PRED)
        .map(|_| match init {
            HeadInit::Uniform => Linear::uniform(&mut rng, dim, dim),
            HeadInit::Identity => Linear::identity(dim),
        })
        .collect()
}

impl StudentModel {
    /// Fully random student (used when no teacher prefix is wanted).
    pub fn new(config: EncoderConfig, head_init: HeadInit) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(config.seed, &[0x57d]);
        let frontend = Linear::uniform(&mut rng, config.input_dim, config.model_dim);
        let blocks = (0..config.n_blocks)
            .map(|_| Block::init(&mut rng, config.model_dim, config.mlp_dim))
            .collect();
        let heads = fresh_heads(config.model_dim, head_init, config.seed);
        Ok(Self {
            config,
            params: StudentParams {
                frontend,
                blocks,
                heads,
            },
        })
    }

    pub fn from_params(config: EncoderConfig, params: StudentParams<Tensor>) -> Result<Self> {
        config.validate()?;
        let (d, f) = (config.model_dim, config.input_dim);
        let expect = |name: &str, t: &Tensor, shape: &[usize]| -> Result<()> {
            if t.shape() != shape {
                return Err(Error::Argument(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(())
        };
        if params.blocks.len() != config.n_blocks || params.heads.len() != N_HEADS_PRED {
            return Err(Error::Argument(format!(
                "student needs {} blocks and {N_HEADS_PRED} heads, got {} and {}",
                config.n_blocks,
                params.blocks.len(),
                params.heads.len()
            )));
        }
        expect("frontend.weight", &params.frontend.weight, &[f, d])?;
        for (name, t) in params.named() {
            if name.ends_with(".bias") {
                let want = if name.contains("fc1") { config.mlp_dim } else { d };
                expect(&name, t, &[want])?;
            } else if name.contains("fc1") {
                expect(&name, t, &[d, config.mlp_dim])?;
            } else if name.contains("fc2") {
                expect(&name, t, &[config.mlp_dim, d])?;
            } else if name != "frontend.weight" {
                expect(&name, t, &[d, d])?;
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &StudentParams<Tensor> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut StudentParams<Tensor> {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.named().iter().map(|(_, t)| t.len()).sum()
    }

    fn run<C: Compute>(
        &self,
        c: &C,
        params: &StudentParams<C::Value>,
        x: &C::Value,
    ) -> Result<(C::Value, C::Value)> {
        let hs = encode(c, &params.frontend, &params.blocks, self.config.n_heads, x)?;
        let z = hs.last().expect("at least one block").clone();
        let preds = params
            .heads
            .iter()
            .map(|h| h.forward(c, &z))
            .collect::<Result<Vec<_>>>()?;
        let stacked = c.stack(&preds, 1)?;
        Ok((z, stacked))
    }

    /// Record the forward pass on `tape`. Parameters enter as trainable
    /// leaves; the features as a constant.
    pub fn forward(&self, tape: &Tape, features: &Tensor) -> Result<StudentForward> {
        let [b, t, f] = batched_shape(features.shape(), self.config.input_dim)?;
        let params = self.params.map(|p| tape.param(p.clone()));
        let x = tape.constant(features.reshape(&[b, t, f])?);
        let (z, preds) = self.run(tape, &params, &x)?;
        let d = self.config.model_dim;
        let (z, predictions) = if features.rank() == 2 {
            (
                tape.reshape(z, &[t, d])?,
                tape.reshape(preds, &[N_HEADS_PRED, t, d])?,
            )
        } else {
            (z, preds)
        };
        Ok(StudentForward {
            params,
            z,
            predictions,
        })
    }

    /// Record the forward pass with caller-supplied parameter handles.
    /// `features` must be `[B, T, F]`; returns `(z, Ĥ)`.
    pub fn forward_with(
        &self,
        tape: &Tape,
        params: &StudentParams<Var>,
        features: Var,
    ) -> Result<(Var, Var)> {
        batched_shape(&tape.shape(features), self.config.input_dim)?;
        self.run(tape, params, &features)
    }

    /// Untracked `(z, Ĥ)`, bit-identical to the recorded path.
    pub fn predict(&self, features: &Tensor) -> Result<(Tensor, Tensor)> {
        let [b, t, f] = batched_shape(features.shape(), self.config.input_dim)?;
        let (z, preds) = self.run(&Eager, &self.params, &features.reshape(&[b, t, f])?)?;
        if features.rank() == 2 {
            let d = self.config.model_dim;
            Ok((z.reshape(&[t, d])?, preds.reshape(&[N_HEADS_PRED, t, d])?))
        } else {
            Ok((z, preds))
        }
    }

    /// Last hidden state only.
    pub fn embed(&self, features: &Tensor) -> Result<Tensor> {
        let [b, t, f] = batched_shape(features.shape(), self.config.input_dim)?;
        let x = features.reshape(&[b, t, f])?;
        let hs = encode(
            &Eager,
            &self.params.frontend,
            &self.params.blocks,
            self.config.n_heads,
            &x,
        )?;
        let z = hs.into_iter().last().expect("at least one block");
        if features.rank() == 2 {
            z.reshape(&[t, self.config.model_dim])
        } else {
            Ok(z)
        }
    }
}

/// Copy the teacher's frontend and first [`STUDENT_BLOCKS`] blocks; draw new
/// heads from `head_seed`.
pub fn init_student_from_teacher(
    teacher: &TeacherModel,
    head_init: HeadInit,
    head_seed: u64,
) -> Result<StudentModel> {
    let tc = teacher.config();
    if tc.n_blocks < STUDENT_BLOCKS {
        return Err(Error::Argument(format!(
            "teacher has {} blocks, student needs {STUDENT_BLOCKS}",
            tc.n_blocks
        )));
    }
    let config = EncoderConfig {
        n_blocks: STUDENT_BLOCKS,
        seed: head_seed,
        ..tc.clone()
    };
    let params = StudentParams {
        frontend: teacher.frontend().clone(),
        blocks: teacher.blocks()[..STUDENT_BLOCKS].to_vec(),
        heads: fresh_heads(tc.model_dim, head_init, head_seed),
    };
    StudentModel::from_params(config, params)
}
