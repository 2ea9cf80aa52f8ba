use rand::Rng;

use super::audio::{clip, power, AudioBuffer};
use crate::error::{Error, Result};

/// `10·log10(P_signal / P_noise)` with `P` the mean squared amplitude.
pub fn measure_snr(signal: &AudioBuffer, noise: &AudioBuffer) -> Result<f64> {
    if signal.len() != noise.len() || signal.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(Error::Argument(format!(
            "snr needs matching buffers, got {} samples @ {} Hz and {} samples @ {} Hz",
            signal.len(),
            signal.sample_rate_hz(),
            noise.len(),
            noise.sample_rate_hz()
        )));
    }
    snr_db(signal.samples(), noise.samples())
}

pub(crate) fn snr_db(signal: &[f64], noise: &[f64]) -> Result<f64> {
    let pn = power(noise);
    if pn <= 0.0 {
        return Err(Error::Degenerate("noise has zero power".into()));
    }
    Ok(10.0 * (power(signal) / pn).log10())
}

/// Result of [`mix_at_snr`].
#[derive(Clone, Debug)]
pub struct Mixture {
    /// `signal + gain·noise`, hard-clipped to `[-1, 1]`.
    pub mixed: AudioBuffer,
    /// The cropped noise after scaling, i.e. exactly what was added before
    /// clipping.
    pub scaled_noise: AudioBuffer,
    pub gain: f64,
}

/// Gain `α` such that `signal + α·noise` has the target SNR.
pub(crate) fn snr_gain(signal_power: f64, noise_power: f64, target_snr_db: f64) -> f64 {
    (signal_power / (noise_power * 10f64.powf(target_snr_db / 10.0))).sqrt()
}

/// Add `noise` to `signal` at `target_snr_db`. A noise buffer longer than
/// the signal is cropped at a random offset drawn from `rng`.
pub fn mix_at_snr<R: Rng + ?Sized>(
    signal: &AudioBuffer,
    noise: &AudioBuffer,
    target_snr_db: f64,
    rng: &mut R,
) -> Result<Mixture> {
    if !target_snr_db.is_finite() {
        return Err(Error::Argument(format!("target snr {target_snr_db}")));
    }
    if signal.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(Error::Argument(format!(
            "sample rates differ: {} vs {}",
            signal.sample_rate_hz(),
            noise.sample_rate_hz()
        )));
    }
    if noise.len() < signal.len() {
        return Err(Error::Argument(format!(
            "noise ({} samples) is shorter than signal ({} samples)",
            noise.len(),
            signal.len()
        )));
    }
    let offset = if noise.len() > signal.len() {
        rng.gen_range(0..=noise.len() - signal.len())
    } else {
        0
    };
    let crop = &noise.samples()[offset..offset + signal.len()];
    let ps = signal.power();
    let pn = power(crop);
    if ps <= 0.0 {
        return Err(Error::Degenerate("signal has zero power".into()));
    }
    if pn <= 0.0 {
        return Err(Error::Degenerate("noise has zero power".into()));
    }
    let gain = snr_gain(ps, pn, target_snr_db);
    let scaled: Vec<f64> = crop.iter().map(|n| gain * n).collect();
    let mixed = signal
        .samples()
        .iter()
        .zip(&scaled)
        .map(|(s, n)| clip(s + n))
        .collect();
    Ok(Mixture {
        mixed: signal.with_samples(mixed)?,
        scaled_noise: signal.with_samples(scaled)?,
        gain,
    })
}
