//! Distortion chains applied to clean utterances.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::audio::AudioBuffer;
use super::effects::{apply_reverb, band_reject, pitch_shift, MAX_PITCH_SHIFT_SEMITONES};
use super::noise::{synth_noise, NoiseKind};
use super::snr::mix_at_snr;
use crate::error::{Error, Result};

/// Lower bound of the additive-noise SNR range, in dB.
pub const SNR_MIN_DB: f64 = 10.0;
/// Upper (exclusive for sampling) bound of the SNR range; also the effective
/// SNR of a clean or non-additive-only view.
pub const SNR_MAX_DB: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distortion {
    Noise { noise: NoiseKind, snr_db: f64 },
    Reverb { rt60_s: f64 },
    PitchShift { semitones: f64 },
    BandReject { center_hz: f64, q: f64 },
}

impl Distortion {
    pub fn is_additive(&self) -> bool {
        matches!(self, Distortion::Noise { .. })
    }

    pub fn snr_db(&self) -> Option<f64> {
        match *self {
            Distortion::Noise { snr_db, .. } => Some(snr_db),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Distortion::Noise { snr_db, .. } => {
                if !(SNR_MIN_DB..SNR_MAX_DB).contains(&snr_db) {
                    return Err(Error::Argument(format!(
                        "additive snr {snr_db} dB outside [{SNR_MIN_DB}, {SNR_MAX_DB})"
                    )));
                }
            }
            Distortion::Reverb { rt60_s } => {
                if !(rt60_s >= 0.0) {
                    return Err(Error::Argument(format!("rt60 {rt60_s}")));
                }
            }
            Distortion::PitchShift { semitones } => {
                if !(semitones.abs() <= MAX_PITCH_SHIFT_SEMITONES) {
                    return Err(Error::Argument(format!("pitch shift {semitones}")));
                }
            }
            Distortion::BandReject { center_hz, q } => {
                if !(center_hz > 0.0) || !(q > 0.0) {
                    return Err(Error::Argument(format!(
                        "band reject at {center_hz} Hz, q {q}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An ordered distortion chain plus the seed that drives its randomness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionPlan {
    specs: Vec<Distortion>,
    effective_snr_db: f64,
    seed: u64,
}

impl DistortionPlan {
    pub fn new(specs: Vec<Distortion>, seed: u64) -> Result<Self> {
        for s in &specs {
            s.validate()?;
        }
        // with several additive stages the noisiest one sets the level
        let effective_snr_db = specs
            .iter()
            .filter_map(Distortion::snr_db)
            .fold(SNR_MAX_DB, f64::min)
            .clamp(SNR_MIN_DB, SNR_MAX_DB);
        Ok(Self {
            specs,
            effective_snr_db,
            seed,
        })
    }

    pub fn clean(seed: u64) -> Self {
        Self {
            specs: Vec::new(),
            effective_snr_db: SNR_MAX_DB,
            seed,
        }
    }

    pub fn specs(&self) -> &[Distortion] {
        &self.specs
    }

    pub fn effective_snr_db(&self) -> f64 {
        self.effective_snr_db
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_clean(&self) -> bool {
        self.specs.is_empty()
    }
}

/// One additive stage as executed: the signal it was added to and the
/// scaled noise, both before clipping.
#[derive(Clone, Debug)]
pub struct AdditiveStage {
    pub reference: AudioBuffer,
    pub scaled_noise: AudioBuffer,
    pub target_snr_db: f64,
}

#[derive(Clone, Debug)]
pub struct AppliedPlan {
    pub audio: AudioBuffer,
    pub additive: Vec<AdditiveStage>,
}

/// Apply `plan` to `clean`, specs in order.
pub fn apply_plan(clean: &AudioBuffer, plan: &DistortionPlan) -> Result<AudioBuffer> {
    apply_plan_traced(clean, plan).map(|a| a.audio)
}

/// As [`apply_plan`], also returning what each additive stage mixed in.
pub fn apply_plan_traced(clean: &AudioBuffer, plan: &DistortionPlan) -> Result<AppliedPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut audio = clean.clone();
    let mut additive = Vec::new();
    for spec in &plan.specs {
        let stage_seed = rng.next_u64();
        audio = match *spec {
            Distortion::Noise { noise, snr_db } => {
                // a little longer than needed so the crop offset is random
                let extra = (audio.sample_rate_hz() / 10) as usize;
                let n = synth_noise(noise, audio.len() + extra, audio.sample_rate_hz(), stage_seed)?;
                let mut crop_rng = ChaCha8Rng::seed_from_u64(stage_seed ^ 0x9e37_79b9_7f4a_7c15);
                let m = mix_at_snr(&audio, &n, snr_db, &mut crop_rng)?;
                additive.push(AdditiveStage {
                    reference: audio,
                    scaled_noise: m.scaled_noise,
                    target_snr_db: snr_db,
                });
                m.mixed
            }
            Distortion::Reverb { rt60_s } => apply_reverb(&audio, rt60_s, stage_seed)?,
            Distortion::PitchShift { semitones } => pitch_shift(&audio, semitones)?,
            Distortion::BandReject { center_hz, q } => band_reject(&audio, center_hz, q)?,
        };
    }
    Ok(AppliedPlan { audio, additive })
}
