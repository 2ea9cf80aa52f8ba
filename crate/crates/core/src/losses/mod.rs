//! Distillation objectives recorded on a [`Tape`].
//!
//! All functions take student predictions `Ĥ` and teacher targets `H` laid out
//! `[B, P, T, D]`. Teacher targets are detached on entry, so no gradient ever
//! reaches them.

mod heuristic;

pub use heuristic::{heuristic_lambda, HEURISTIC_LAMBDA_MAX, HEURISTIC_LAMBDA_MIN};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Guard inside the cosine and Barlow Twins norms: `‖x‖ = sqrt(Σx² + ε²)`.
pub const NORM_EPS: f64 = 1e-8;
/// Added to the batch variance before taking its inverse square root.
pub const STANDARDIZE_EPS: f64 = 1e-12;

pub const DEFAULT_LAMBDA_CC: f64 = 5e-5;
pub const DEFAULT_LAMBDA_SC: f64 = 5e-6;
pub const DEFAULT_GAMMA: f64 = 1.0;

/// How features are normalized along the batch before correlating.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// center and scale to unit variance
    #[default]
    Full,
    /// center only
    MeanOnly,
}

impl Standardization {
    fn mean_only(self) -> bool {
        self == Self::MeanOnly
    }
}

impl FromStr for Standardization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "mean_only" => Ok(Self::MeanOnly),
            _ => Err(Error::Argument(format!(
                "unknown standardization {s:?} (expected full or mean_only)"
            ))),
        }
    }
}

impl fmt::Display for Standardization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::MeanOnly => "mean_only",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gamma: f64,
    pub lambda_cc: f64,
    pub lambda_sc: f64,
    /// derive λ_cc and λ_sc from view SNRs instead of the fixed values
    pub heuristic: bool,
    pub standardization: Standardization,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            lambda_cc: DEFAULT_LAMBDA_CC,
            lambda_sc: DEFAULT_LAMBDA_SC,
            heuristic: false,
            standardization: Standardization::Full,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("lambda_cc", self.lambda_cc),
            ("lambda_sc", self.lambda_sc),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Weights for one step. λ_cc follows the teacher view's SNR and λ_sc the
    /// student view's when the heuristic is on.
    pub fn effective(&self, teacher_snr_db: f64, student_snr_db: f64) -> EffectiveWeights {
        let (lambda_cc, lambda_sc) = if self.heuristic {
            (heuristic_lambda(teacher_snr_db), heuristic_lambda(student_snr_db))
        } else {
            (self.lambda_cc, self.lambda_sc)
        };
        EffectiveWeights {
            gamma: self.gamma,
            lambda_cc,
            lambda_sc,
            standardization: self.standardization,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveWeights {
    pub gamma: f64,
    pub lambda_cc: f64,
    pub lambda_sc: f64,
    pub standardization: Standardization,
}

impl From<LossWeights> for EffectiveWeights {
    fn from(w: LossWeights) -> Self {
        Self {
            gamma: w.gamma,
            lambda_cc: w.lambda_cc,
            lambda_sc: w.lambda_sc,
            standardization: w.standardization,
        }
    }
}

/// Per-step breakdown of a loss. Terms that do not apply to the chosen
/// objective are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_cc_diag: Option<f64>,
    pub l_cc_offdiag: Option<f64>,
    pub l_sc: Option<f64>,
    pub l_cos: Option<f64>,
    pub l_total: f64,
    pub lambda_cc_eff: Option<f64>,
    pub lambda_sc_eff: Option<f64>,
}

/// Student predictions and teacher targets of matching `[B, P, T, D]` shape.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationBatch {
    student: Tensor,
    teacher: Tensor,
}

impl RepresentationBatch {
    pub fn new(student: Tensor, teacher: Tensor) -> Result<Self> {
        check_pair("representation batch", student.shape(), teacher.shape())?;
        Ok(Self { student, teacher })
    }

    pub fn student(&self) -> &Tensor {
        &self.student
    }

    pub fn teacher(&self) -> &Tensor {
        &self.teacher
    }

    fn on_tape(&self) -> (Tape, Var, Var) {
        let tape = Tape::new();
        let s = tape.param(self.student.clone());
        let t = tape.constant(self.teacher.clone());
        (tape, s, t)
    }

    pub fn kd_loss(&self, gamma: f64) -> Result<f64> {
        let (tape, s, t) = self.on_tape();
        let l = kd_loss(&tape, s, t, gamma)?;
        tape.item(l)
    }

    pub fn cross_corr(&self, standardization: Standardization) -> Result<CorrelationMatrix> {
        let (tape, s, t) = self.on_tape();
        let c = cross_corr(&tape, s, t, standardization)?;
        let values = tape.value(c).clone();
        Ok(CorrelationMatrix {
            values,
            kind: CorrelationKind::Cross,
        })
    }

    pub fn self_corr(&self, standardization: Standardization) -> Result<CorrelationMatrix> {
        let (tape, s, _) = self.on_tape();
        let c = self_corr(&tape, s, standardization)?;
        let values = tape.value(c).clone();
        Ok(CorrelationMatrix {
            values,
            kind: CorrelationKind::SelfCorr,
        })
    }

    pub fn cl_loss(&self, weights: EffectiveWeights) -> Result<LossReport> {
        let (tape, s, t) = self.on_tape();
        let parts = cl_loss(&tape, s, t, weights)?;
        parts.report(&tape, weights)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrelationKind {
    Cross,
    SelfCorr,
}

/// `[P, T, D, D]` correlation values for each head and frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub values: Tensor,
    pub kind: CorrelationKind,
}

fn check_pair(op: &'static str, s: &[usize], t: &[usize]) -> Result<()> {
    if s != t {
        return Err(Error::shape(op, s, t));
    }
    if s.len() != 4 {
        return Err(Error::Argument(format!("{op}: expected B×P×T×D, got {s:?}")));
    }
    Ok(())
}

fn check_corr_batch(op: &'static str, shape: &[usize]) -> Result<()> {
    if shape[0] < 2 {
        return Err(Error::BatchSize {
            op,
            got: shape[0],
            min: 2,
        });
    }
    Ok(())
}

/// Guarded Euclidean norm over the last axis.
fn norm_last(tape: &Tape, x: Var) -> Result<Var> {
    let sq = tape.sum_last(tape.square(x)?)?;
    tape.sqrt(tape.add_scalar(sq, NORM_EPS * NORM_EPS)?)
}

/// `Σ_p Σ_t log σ(cos(h, ĥ))`, averaged over the batch.
pub fn cosine_term(tape: &Tape, student: Var, teacher: Var) -> Result<Var> {
    check_pair("cosine_term", &tape.shape(student), &tape.shape(teacher))?;
    let teacher = tape.detach(teacher);
    let b = tape.shape(student)[0] as f64;
    let dot = tape.sum_last(tape.mul(student, teacher)?)?;
    let norms = tape.mul(norm_last(tape, student)?, norm_last(tape, teacher)?)?;
    let cos = tape.div(dot, norms)?;
    let total = tape.sum(tape.log(tape.sigmoid(cos)?)?)?;
    tape.scale(total, 1.0 / b)
}

/// Tape handles of the distillation loss and its cosine part.
#[derive(Clone, Copy, Debug)]
pub struct KdTerms {
    /// `Σ_p Σ_t (1/D)‖h − ĥ‖₁`, batch mean
    pub l1: Var,
    /// the cosine term, before γ
    pub cos: Var,
    pub total: Var,
}

pub fn kd_terms(tape: &Tape, student: Var, teacher: Var, gamma: f64) -> Result<KdTerms> {
    check_pair("kd_loss", &tape.shape(student), &tape.shape(teacher))?;
    let shape = tape.shape(student);
    let (b, d) = (shape[0] as f64, shape[3] as f64);
    let teacher = tape.detach(teacher);
    let l1 = tape.sum(tape.abs(tape.sub(student, teacher)?)?)?;
    let l1 = tape.scale(l1, 1.0 / (d * b))?;
    let cos = cosine_term(tape, student, teacher)?;
    let total = tape.sub(l1, tape.scale(cos, gamma)?)?;
    Ok(KdTerms { l1, cos, total })
}

/// L1 plus log-sigmoid-cosine distance, summed over heads and frames and
/// averaged over the batch.
pub fn kd_loss(tape: &Tape, student: Var, teacher: Var, gamma: f64) -> Result<Var> {
    kd_terms(tape, student, teacher, gamma).map(|t| t.total)
}

/// Barlow Twins loss between two `[B, D]` views: column-normalized
/// cross-correlation driven toward the identity. Both views are trainable.
pub fn bt_loss(tape: &Tape, view1: Var, view2: Var, lambda: f64) -> Result<Var> {
    let (s1, s2) = (tape.shape(view1), tape.shape(view2));
    if s1 != s2 || s1.len() != 2 {
        return Err(Error::shape("bt_loss", &s1, &s2));
    }
    check_corr_batch("bt_loss", &s1)?;
    let col_norm = |v: Var| -> Result<Var> {
        let sq = tape.sum_axis(tape.square(v)?, 0)?;
        let n = tape.sqrt(tape.add_scalar(sq, NORM_EPS * NORM_EPS)?)?;
        tape.div(v, n)
    };
    let a = col_norm(view1)?;
    let c = col_norm(view2)?;
    let corr = tape.matmul(tape.transpose_last2(a)?, c)?;
    let (diag, off) = identity_terms(tape, corr, s1[1])?;
    tape.add(diag, tape.scale(off, lambda)?)
}

/// `(Σ_i (1 − c_ii)², Σ_{i≠j} c_ij²)` summed over every leading index of a
/// `[.., D, D]` matrix.
fn identity_terms(tape: &Tape, corr: Var, d: usize) -> Result<(Var, Var)> {
    let eye = tape.constant(Tensor::eye(d));
    let off_mask = tape.constant(Tensor::eye(d).map(|v| 1.0 - v));
    let diag = tape.sum_last(tape.mul(corr, eye)?)?;
    let diag = tape.sum(tape.square(tape.add_scalar(tape.scale(diag, -1.0)?, 1.0)?)?)?;
    let off = tape.sum(tape.square(tape.mul(corr, off_mask)?)?)?;
    Ok((diag, off))
}

/// Student/teacher correlation per head and frame, `[P, T, D, D]`.
pub fn cross_corr(tape: &Tape, student: Var, teacher: Var, std: Standardization) -> Result<Var> {
    let shape = tape.shape(student);
    check_pair("cross_corr", &shape, &tape.shape(teacher))?;
    check_corr_batch("cross_corr", &shape)?;
    let teacher = tape.detach(teacher);
    let s = tape.batch_standardize(student, STANDARDIZE_EPS, std.mean_only())?;
    let t = tape.batch_standardize(teacher, STANDARDIZE_EPS, std.mean_only())?;
    tape.batched_outer(s, t)
}

/// Student self-correlation per head and frame, `[P, T, D, D]`.
pub fn self_corr(tape: &Tape, student: Var, std: Standardization) -> Result<Var> {
    let shape = tape.shape(student);
    if shape.len() != 4 {
        return Err(Error::Argument(format!("self_corr: expected B×P×T×D, got {shape:?}")));
    }
    check_corr_batch("self_corr", &shape)?;
    let s = tape.batch_standardize(student, STANDARDIZE_EPS, std.mean_only())?;
    tape.batched_outer(s, s)
}

/// Tape handles of every term of the correlation objective.
#[derive(Clone, Copy, Debug)]
pub struct ClTerms {
    /// `mean_{p,t} Σ_i (1 − C_cc,ii)²`
    pub cc_diag: Var,
    /// `λ_cc · mean_{p,t} Σ_{i≠j} C_cc,ij²`
    pub cc_offdiag: Var,
    /// `λ_sc · mean_{p,t} Σ_{i≠j} C_sc,ij²`
    pub sc: Var,
    /// the cosine term, before γ
    pub cos: Var,
    pub total: Var,
}

impl ClTerms {
    pub fn report(&self, tape: &Tape, w: EffectiveWeights) -> Result<LossReport> {
        Ok(LossReport {
            l_cc_diag: Some(tape.item(self.cc_diag)?),
            l_cc_offdiag: Some(tape.item(self.cc_offdiag)?),
            l_sc: Some(tape.item(self.sc)?),
            l_cos: Some(tape.item(self.cos)?),
            l_total: tape.item(self.total)?,
            lambda_cc_eff: Some(w.lambda_cc),
            lambda_sc_eff: Some(w.lambda_sc),
        })
    }
}

/// `L_CC + L_SC − γ·L_cos`.
pub fn cl_loss(tape: &Tape, student: Var, teacher: Var, w: EffectiveWeights) -> Result<ClTerms> {
    let shape = tape.shape(student);
    check_pair("cl_loss", &shape, &tape.shape(teacher))?;
    let (p, t, d) = (shape[1], shape[2], shape[3]);
    let per_frame = 1.0 / (p * t) as f64;

    let c_cc = cross_corr(tape, student, teacher, w.standardization)?;
    let (diag, off) = identity_terms(tape, c_cc, d)?;
    let cc_diag = tape.scale(diag, per_frame)?;
    let cc_offdiag = tape.scale(off, w.lambda_cc * per_frame)?;

    let c_sc = self_corr(tape, student, w.standardization)?;
    let (_, off_sc) = identity_terms(tape, c_sc, d)?;
    let sc = tape.scale(off_sc, w.lambda_sc * per_frame)?;

    let cos = cosine_term(tape, student, teacher)?;
    let total = tape.add(tape.add(cc_diag, cc_offdiag)?, sc)?;
    let total = tape.sub(total, tape.scale(cos, w.gamma)?)?;
    Ok(ClTerms {
        cc_diag,
        cc_offdiag,
        sc,
        cos,
        total,
    })
}

/// Barlow Twins applied independently at every head and frame between
/// `Ĥ[:, p, t, :]` and `H[:, p, t, :]`, averaged over `(p, t)`. The teacher
/// side is detached.
pub fn bt_reference_loss(tape: &Tape, student: Var, teacher: Var, lambda: f64) -> Result<Var> {
    let shape = tape.shape(student);
    check_pair("bt_reference_loss", &shape, &tape.shape(teacher))?;
    check_corr_batch("bt_reference_loss", &shape)?;
    let (b, p, t, d) = (shape[0], shape[1], shape[2], shape[3]);
    let teacher = tape.detach(teacher);
    // Normalize columns in [B, P·T, D] layout, then regroup to [P·T, B, D]
    // so each (p, t) becomes one batched matmul.
    let normalized = |v: Var| -> Result<Var> {
        let v = tape.reshape(v, &[b, p * t, d])?;
        let sq = tape.sum_axis(tape.square(v)?, 0)?;
        let n = tape.sqrt(tape.add_scalar(sq, NORM_EPS * NORM_EPS)?)?;
        tape.permute(tape.div(v, n)?, &[1, 0, 2])
    };
    let corr = tape.matmul(tape.transpose_last2(normalized(student)?)?, normalized(teacher)?)?;
    let (diag, off) = identity_terms(tape, corr, d)?;
    let total = tape.add(diag, tape.scale(off, lambda)?)?;
    tape.scale(total, 1.0 / (p * t) as f64)
}

#[cfg(test)]
mod tests;
