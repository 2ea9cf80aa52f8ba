use rand::distributions::WeightedIndex;
use rand::prelude::Distribution as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{
    apply_plan, AudioBuffer, Distortion, DistortionPlan, NoiseKind, SNR_MAX_DB, SNR_MIN_DB,
};
use crate::error::{Error, Result};
use crate::rng::rng_for;

use super::Setup;

const TAG_STUDENT: u64 = 1;
const TAG_TEACHER: u64 = 2;

/// Relative sampling weights for each distortion kind, plus the chance of
/// adding a non-additive effect on top of the additive noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionPolicy {
    pub gaussian: f64,
    pub white: f64,
    pub pink: f64,
    pub babble: f64,
    pub non_additive_prob: f64,
    pub reverb: f64,
    pub pitch_shift: f64,
    pub band_reject: f64,
}

impl Default for DistortionPolicy {
    fn default() -> Self {
        Self {
            gaussian: 1.0,
            white: 1.0,
            pink: 1.0,
            babble: 1.0,
            non_additive_prob: 0.5,
            reverb: 1.0,
            pitch_shift: 1.0,
            band_reject: 1.0,
        }
    }
}

/// Parameter ranges for the non-additive effects.
pub const RT60_RANGE_S: (f64, f64) = (0.1, 0.6);
pub const PITCH_RANGE_SEMITONES: f64 = 3.0;
pub const BAND_REJECT_CENTER_HZ: (f64, f64) = (300.0, 3000.0);
pub const BAND_REJECT_Q: (f64, f64) = (1.0, 10.0);

impl DistortionPolicy {
    fn additive_weights(&self) -> [f64; 4] {
        [self.gaussian, self.white, self.pink, self.babble]
    }

    fn effect_weights(&self) -> [f64; 3] {
        [self.reverb, self.pitch_shift, self.band_reject]
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.additive_weights().into_iter().chain(self.effect_weights());
        for w in all {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Argument(format!("policy weight {w}")));
            }
        }
        if self.additive_weights().iter().sum::<f64>() <= 0.0 {
            return Err(Error::Argument("policy needs a positive additive weight".into()));
        }
        if !(0.0..=1.0).contains(&self.non_additive_prob) {
            return Err(Error::Argument(format!(
                "non_additive_prob {} outside [0, 1]",
                self.non_additive_prob
            )));
        }
        if self.non_additive_prob > 0.0 && self.effect_weights().iter().sum::<f64>() <= 0.0 {
            return Err(Error::Argument(
                "non_additive_prob > 0 needs a positive effect weight".into(),
            ));
        }
        Ok(())
    }

    /// Draw one plan: an optional non-additive effect followed by one
    /// additive noise, so the recorded SNR is the SNR of the final mix.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<DistortionPlan> {
        let mut specs = Vec::with_capacity(2);
        if rng.gen_bool(self.non_additive_prob) {
            let which = WeightedIndex::new(self.effect_weights())
                .map_err(|e| Error::Argument(format!("effect weights: {e}")))?
                .sample(rng);
            specs.push(match which {
                0 => Distortion::Reverb {
                    rt60_s: rng.gen_range(RT60_RANGE_S.0..=RT60_RANGE_S.1),
                },
                1 => Distortion::PitchShift {
                    semitones: rng.gen_range(-PITCH_RANGE_SEMITONES..=PITCH_RANGE_SEMITONES),
                },
                _ => {
                    let (lo, hi) = BAND_REJECT_CENTER_HZ;
                    Distortion::BandReject {
                        center_hz: (rng.gen_range(lo.ln()..=hi.ln())).exp(),
                        q: rng.gen_range(BAND_REJECT_Q.0..=BAND_REJECT_Q.1),
                    }
                }
            });
        }
        let kind = WeightedIndex::new(self.additive_weights())
            .map_err(|e| Error::Argument(format!("additive weights: {e}")))?
            .sample(rng);
        specs.push(Distortion::Noise {
            noise: NoiseKind::ALL[kind],
            snr_db: rng.gen_range(SNR_MIN_DB..SNR_MAX_DB),
        });
        DistortionPlan::new(specs, rng.next_u64())
    }
}

/// Teacher and student inputs for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Views {
    pub teacher: Vec<AudioBuffer>,
    pub student: Vec<AudioBuffer>,
    pub teacher_plans: Vec<DistortionPlan>,
    pub student_plans: Vec<DistortionPlan>,
    pub teacher_snr_db: Vec<f64>,
    pub student_snr_db: Vec<f64>,
}

impl Views {
    pub fn mean_teacher_snr_db(&self) -> f64 {
        mean(&self.teacher_snr_db)
    }

    pub fn mean_student_snr_db(&self) -> f64 {
        mean(&self.student_snr_db)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Build per-utterance views. With `Setup::StudentOnly` the teacher sees the
/// clean audio (recorded at the clean SNR); with `Setup::Both` it gets its own
/// independently drawn plan.
pub fn sample_views(
    clean: &[AudioBuffer],
    setup: Setup,
    policy: &DistortionPolicy,
    seed: u64,
) -> Result<Views> {
    sample_views_for(clean, setup, policy, seed, true)
}

/// As [`sample_views`]; when `distort_teacher` is false the teacher side is
/// left clean even under `Setup::Both`. Student views do not depend on the flag.
pub(crate) fn sample_views_for(
    clean: &[AudioBuffer],
    setup: Setup,
    policy: &DistortionPolicy,
    seed: u64,
    distort_teacher: bool,
) -> Result<Views> {
    if clean.is_empty() {
        return Err(Error::Argument("sample_views on an empty batch".into()));
    }
    policy.validate()?;
    let n = clean.len();
    let mut views = Views {
        teacher: Vec::with_capacity(n),
        student: Vec::with_capacity(n),
        teacher_plans: Vec::with_capacity(n),
        student_plans: Vec::with_capacity(n),
        teacher_snr_db: Vec::with_capacity(n),
        student_snr_db: Vec::with_capacity(n),
    };
    for (i, audio) in clean.iter().enumerate() {
        let sp = policy.sample(&mut rng_for(seed, &[TAG_STUDENT, i as u64]))?;
        views.student.push(apply_plan(audio, &sp)?);
        views.student_snr_db.push(sp.effective_snr_db());
        views.student_plans.push(sp);

        let tp = match setup {
            Setup::Both if distort_teacher => {
                policy.sample(&mut rng_for(seed, &[TAG_TEACHER, i as u64]))?
            }
            _ => DistortionPlan::clean(0),
        };
        views.teacher.push(if tp.is_clean() {
            audio.clone()
        } else {
            apply_plan(audio, &tp)?
        });
        views.teacher_snr_db.push(tp.effective_snr_db());
        views.teacher_plans.push(tp);
    }
    Ok(views)
}
