//! Distillation training: view sampling, the optimization loop, dev-set
//! evaluation and checkpoint selection.

mod adam;
mod run;
mod views;

pub use adam::Adam;
pub use run::{
    evaluate_dev_loss, select_checkpoint, smoothed, train_distill, Batch, Checkpoint, DevSet,
    RunRecord, TrainObserver, TrainOutcome, Trainer,
};
pub use views::{
    sample_views, DistortionPolicy, Views, BAND_REJECT_CENTER_HZ, BAND_REJECT_Q,
    PITCH_RANGE_SEMITONES, RT60_RANGE_S,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::{AudioBuffer, LogMel};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::models::TeacherMode;
use crate::tensor::Tensor;

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err(Error::Argument(format!(
                        concat!("unknown ", stringify!($name), " {:?} (expected one of: ", $($text, " "),+, ")"),
                        s
                    ))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $(Self::$variant => $text,)+
                })
            }
        }
    };
}

/// Which inputs get distorted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    /// only the student input is distorted; the teacher sees clean audio
    StudentOnly,
    /// teacher and student inputs get independent distortions
    #[default]
    Both,
}

string_enum!(Setup { StudentOnly => "student_only", Both => "both" });

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Kd,
    #[default]
    Cl,
    BtReference,
}

string_enum!(LossKind { Kd => "kd", Cl => "cl", BtReference => "bt_reference" });

/// Log-mel front end settings shared by training and probing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate_hz: u32,
    pub n_mels: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            n_mels: 40,
            frame_ms: 25.0,
            hop_ms: 10.0,
        }
    }
}

/// Fixed affine map applied to log-mel energies so model inputs sit near
/// unit scale: `(logmel − FEATURE_SHIFT) / FEATURE_SCALE`.
pub const FEATURE_SHIFT: f64 = -4.5;
pub const FEATURE_SCALE: f64 = 4.0;

/// Turns batches of equal-length waveforms into `[B, T, F]` model inputs.
pub struct Featurizer {
    logmel: LogMel,
}

impl Featurizer {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        Ok(Self {
            logmel: LogMel::new(cfg.sample_rate_hz, cfg.n_mels, cfg.frame_ms, cfg.hop_ms)?,
        })
    }

    /// `[T, F]` features of one waveform.
    pub fn features(&self, audio: &AudioBuffer) -> Result<Tensor> {
        Ok(self
            .logmel
            .compute(audio)?
            .map(|v| (v - FEATURE_SHIFT) / FEATURE_SCALE))
    }

    /// `[B, T, F]` features; every waveform must have the same length.
    pub fn batch(&self, audio: &[AudioBuffer]) -> Result<Tensor> {
        let feats = audio
            .iter()
            .map(|a| self.features(a))
            .collect::<Result<Vec<_>>>()?;
        stack_rows(&feats)
    }
}

/// Stack equal-shaped tensors along a new leading axis.
pub(crate) fn stack_rows(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Argument("empty batch".into()))?;
    let mut data = Vec::with_capacity(first.len() * parts.len());
    for p in parts {
        if p.shape() != first.shape() {
            return Err(Error::shape("batch", first.shape(), p.shape()));
        }
        data.extend_from_slice(p.data());
    }
    let mut shape = vec![parts.len()];
    shape.extend_from_slice(first.shape());
    Tensor::new(&shape, data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub setup: Setup,
    pub loss: LossKind,
    pub weights: LossWeights,
    /// off-diagonal weight of the Barlow Twins reference loss
    pub bt_lambda: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub dev_eval_every: usize,
    pub policy: DistortionPolicy,
    pub teacher_mode: TeacherMode,
    pub features: FeatureConfig,
    /// training crop length; shorter utterances are zero-padded
    pub segment_s: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            setup: Setup::Both,
            loss: LossKind::Cl,
            weights: LossWeights::default(),
            bt_lambda: 5e-3,
            steps: 2000,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 0,
            dev_eval_every: 200,
            policy: DistortionPolicy::default(),
            teacher_mode: TeacherMode::NoiseVariant,
            features: FeatureConfig::default(),
            segment_s: 1.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Argument("steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be at least 1".into()));
        }
        if self.batch_size < 2 && self.loss != LossKind::Kd {
            return Err(Error::BatchSize {
                op: "correlation losses",
                got: self.batch_size,
                min: 2,
            });
        }
        if self.dev_eval_every == 0 {
            return Err(Error::Argument("dev_eval_every must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.bt_lambda >= 0.0 && self.bt_lambda.is_finite()) {
            return Err(Error::Argument(format!("bt_lambda {}", self.bt_lambda)));
        }
        if !(self.segment_s > 0.0) {
            return Err(Error::Argument(format!("segment_s {}", self.segment_s)));
        }
        self.weights.validate()?;
        self.policy.validate()
    }

    pub fn segment_len(&self) -> usize {
        (self.segment_s * self.features.sample_rate_hz as f64).round() as usize
    }
}

#[cfg(test)]
mod tests;
