//! Waveform distortion and feature extraction.

mod audio;
mod effects;
pub(crate) mod fft;
mod logmel;
mod noise;
mod plan;
mod snr;
mod wav;

pub use audio::AudioBuffer;
pub use effects::{apply_reverb, band_reject, pitch_shift, synthetic_rir, MAX_PITCH_SHIFT_SEMITONES};
pub use logmel::{hz_to_mel, logmel_frontend, mel_to_hz, LogMel, LOG_FLOOR};
pub use noise::{synth_noise, NoiseKind, BABBLE_STREAMS};
pub use plan::{
    apply_plan, apply_plan_traced, AdditiveStage, AppliedPlan, Distortion, DistortionPlan,
    SNR_MAX_DB, SNR_MIN_DB,
};
pub use snr::{measure_snr, mix_at_snr, Mixture};
pub use wav::{read_wav, write_wav};
