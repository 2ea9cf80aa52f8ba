//! Frozen teacher and trainable student encoders.

mod checkpoint;
mod encoder;
mod student;
mod teacher;

pub use checkpoint::{blob_path, load_student, manifest_path, param_blob, save_student};
pub use encoder::{Block, EncoderConfig, Linear};
pub use student::{
    init_student_from_teacher, HeadInit, StudentForward, StudentModel, StudentParams,
    N_HEADS_PRED, STUDENT_BLOCKS,
};
pub use teacher::{target_layers, TeacherModel};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the teacher sees during distillation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherMode {
    /// the teacher receives its own (possibly distorted) view
    #[default]
    NoiseVariant,
    /// the teacher always receives the clean waveform, so its targets carry
    /// no distortion information
    OracleInvariant,
}

impl FromStr for TeacherMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise_variant" => Ok(Self::NoiseVariant),
            "oracle_invariant" => Ok(Self::OracleInvariant),
            _ => Err(Error::Argument(format!(
                "unknown teacher mode {s:?} (expected noise_variant or oracle_invariant)"
            ))),
        }
    }
}

impl fmt::Display for TeacherMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NoiseVariant => "noise_variant",
            Self::OracleInvariant => "oracle_invariant",
        })
    }
}
