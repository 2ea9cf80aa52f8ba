//! Non-additive distortions: synthetic reverberation, pitch shift and a notch
//! (band-rejection) filter.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::audio::{clip, AudioBuffer};
use super::fft;
use crate::error::{Error, Result};

/// `ln(10^3)`: amplitude decay constant that gives -60 dB at `t = rt60`.
const DECAY_60DB: f64 = 6.907_755_278_982_137;

/// Synthetic room impulse response: a unit direct path followed by seeded
/// Gaussian noise under an exponential envelope reaching -60 dB at `rt60_s`.
/// Normalized to unit energy. `rt60_s == 0` gives the unit impulse.
pub fn synthetic_rir(rt60_s: f64, sample_rate_hz: u32, seed: u64) -> Result<Vec<f64>> {
    if !(rt60_s >= 0.0) || !rt60_s.is_finite() {
        return Err(Error::Argument(format!("rt60 must be non-negative, got {rt60_s}")));
    }
    let tail = (rt60_s * sample_rate_hz as f64).ceil() as usize;
    if tail == 0 {
        return Ok(vec![1.0]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay = DECAY_60DB / tail as f64;
    let mut h = Vec::with_capacity(tail + 1);
    h.push(1.0);
    let mut tail_energy = 0.0;
    for n in 1..=tail {
        let g: f64 = rng.sample(StandardNormal);
        let v = g * (-decay * n as f64).exp();
        tail_energy += v * v;
        h.push(v);
    }
    // equal direct and reverberant energy
    let tail_gain = 1.0 / tail_energy.sqrt();
    h[1..].iter_mut().for_each(|v| *v *= tail_gain);
    let norm = 2f64.sqrt();
    h.iter_mut().for_each(|v| *v /= norm);
    Ok(h)
}

/// Convolve with [`synthetic_rir`], trim to the input length and clip.
pub fn apply_reverb(signal: &AudioBuffer, rt60_s: f64, seed: u64) -> Result<AudioBuffer> {
    let h = synthetic_rir(rt60_s, signal.sample_rate_hz(), seed)?;
    if h.len() == 1 {
        return Ok(signal.clone());
    }
    let y = fft::convolve_truncated(signal.samples(), &h);
    signal.with_samples(y.into_iter().map(clip).collect())
}

pub const MAX_PITCH_SHIFT_SEMITONES: f64 = 12.0;

const WSOLA_FRAME: usize = 512;
const WSOLA_HOP: usize = WSOLA_FRAME / 2;
const WSOLA_TOLERANCE: usize = 128;

/// Shift pitch by `semitones` keeping duration: resample by `2^(s/12)`, then
/// time-stretch back to the original length with waveform-similarity
/// overlap-add.
pub fn pitch_shift(signal: &AudioBuffer, semitones: f64) -> Result<AudioBuffer> {
    if !semitones.is_finite() || semitones.abs() > MAX_PITCH_SHIFT_SEMITONES {
        return Err(Error::Argument(format!(
            "pitch shift must be within ±{MAX_PITCH_SHIFT_SEMITONES} semitones, got {semitones}"
        )));
    }
    if semitones == 0.0 {
        return Ok(signal.clone());
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let resampled = resample_linear(signal.samples(), ratio);
    let stretched = wsola(&resampled, signal.len());
    signal.with_samples(stretched.into_iter().map(clip).collect())
}

/// Read `x` at positions `i·step` with linear interpolation.
fn resample_linear(x: &[f64], step: f64) -> Vec<f64> {
    let n = ((x.len() - 1) as f64 / step).floor() as usize + 1;
    (0..n)
        .map(|i| {
            let pos = i as f64 * step;
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            let a = x[k];
            let b = if k + 1 < x.len() { x[k + 1] } else { a };
            a + frac * (b - a)
        })
        .collect()
}

fn wsola(x: &[f64], out_len: usize) -> Vec<f64> {
    let win = fft::hann(WSOLA_FRAME);
    let mut padded = x.to_vec();
    padded.resize(x.len() + 2 * WSOLA_FRAME + WSOLA_TOLERANCE, 0.0);
    let max_start = x.len().saturating_sub(1);
    let rate = x.len() as f64 / out_len as f64;

    let frames = out_len / WSOLA_HOP + 2;
    let mut out = vec![0.0; frames * WSOLA_HOP + WSOLA_FRAME];
    let mut wsum = vec![0.0; out.len()];
    let mut prev: Option<usize> = None;
    for k in 0..frames {
        let nominal = ((k * WSOLA_HOP) as f64 * rate).round() as usize;
        let start = match prev {
            None => nominal.min(max_start),
            Some(p) => {
                let natural = &padded[p + WSOLA_HOP..p + WSOLA_HOP + WSOLA_FRAME];
                let lo = nominal.saturating_sub(WSOLA_TOLERANCE);
                let hi = (nominal + WSOLA_TOLERANCE).min(max_start);
                let mut best = (lo.min(hi), f64::NEG_INFINITY);
                for cand in lo..=hi.max(lo) {
                    let seg = &padded[cand..cand + WSOLA_FRAME];
                    let score: f64 = seg.iter().zip(natural).map(|(a, b)| a * b).sum();
                    if score > best.1 {
                        best = (cand, score);
                    }
                }
                best.0
            }
        };
        let base = k * WSOLA_HOP;
        for i in 0..WSOLA_FRAME {
            out[base + i] += win[i] * padded[start + i];
            wsum[base + i] += win[i];
        }
        prev = Some(start);
    }
    out.truncate(out_len);
    for (o, w) in out.iter_mut().zip(&wsum) {
        if *w > 1e-3 {
            *o /= w;
        }
    }
    out
}

/// Second-order notch (RBJ cookbook) centered at `center_hz` with quality `q`.
pub fn band_reject(signal: &AudioBuffer, center_hz: f64, q: f64) -> Result<AudioBuffer> {
    let nyquist = signal.sample_rate_hz() as f64 / 2.0;
    if !(center_hz > 0.0 && center_hz < nyquist) {
        return Err(Error::Argument(format!(
            "notch center {center_hz} Hz outside (0, {nyquist}) Hz"
        )));
    }
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::Argument(format!("notch q must be positive, got {q}")));
    }
    let w0 = 2.0 * PI * center_hz / signal.sample_rate_hz() as f64;
    let alpha = w0.sin() / (2.0 * q);
    let cos = w0.cos();
    let a0 = 1.0 + alpha;
    let (b0, b1, b2) = (1.0 / a0, -2.0 * cos / a0, 1.0 / a0);
    let (a1, a2) = (-2.0 * cos / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    let y = signal
        .samples()
        .iter()
        .map(|&x| {
            let y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = x;
            y2 = y1;
            y1 = y;
            y
        })
        .collect();
    signal.with_samples(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::audio::power;

    const SR: u32 = 16_000;

    fn tone(freq: f64, n: usize, amp: f64) -> AudioBuffer {
        AudioBuffer::new(
            (0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / SR as f64).sin())
                .collect(),
            SR,
        )
        .unwrap()
    }

    fn peak_frequency(x: &[f64]) -> (f64, f64) {
        let n = 4096;
        let mid = x.len() / 2 - n / 2;
        let win = fft::hann(n);
        let frame: Vec<f64> = x[mid..mid + n].iter().zip(&win).map(|(a, w)| a * w).collect();
        let spec = fft::forward(&frame);
        let (k, _) = spec[..n / 2]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        let bin = SR as f64 / n as f64;
        (k as f64 * bin, bin)
    }

    #[test]
    fn zero_rt60_is_identity() {
        let x = tone(300.0, 2000, 0.5);
        assert_eq!(apply_reverb(&x, 0.0, 1).unwrap(), x);
        assert!(apply_reverb(&x, -0.1, 1).is_err());
    }

    #[test]
    fn reverb_is_deterministic_and_length_preserving() {
        let x = tone(300.0, 4000, 0.5);
        let a = apply_reverb(&x, 0.2, 5).unwrap();
        let b = apply_reverb(&x, 0.2, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), x.len());
        assert_ne!(a, apply_reverb(&x, 0.2, 6).unwrap());
    }

    #[test]
    fn impulse_response_decays_sixty_db_over_rt60() {
        let rt60 = 0.3;
        let mut imp = vec![0.0; SR as usize];
        imp[0] = 1.0;
        let x = AudioBuffer::new(imp, SR).unwrap();
        let y = apply_reverb(&x, rt60, 42).unwrap();
        // 10 ms energy envelope of the tail, least-squares fit in dB
        let win = (SR / 100) as usize;
        let frames = (rt60 * SR as f64) as usize / win;
        let pts: Vec<(f64, f64)> = (0..frames)
            .map(|f| {
                let s = 1 + f * win;
                let e = power(&y.samples()[s..s + win]);
                ((f as f64 + 0.5) * win as f64 / SR as f64, 10.0 * e.log10())
            })
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        let drop = -slope * rt60;
        assert!((drop - 60.0).abs() < 3.0, "decay over rt60: {drop} dB");
    }

    #[test]
    fn zero_semitones_is_identity() {
        let x = tone(440.0, 8000, 0.5);
        let y = pitch_shift(&x, 0.0).unwrap();
        let diff = x.samples().iter().zip(y.samples()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-6);
    }

    #[test]
    fn octave_up_and_down() {
        let x = tone(440.0, SR as usize, 0.5);
        for (semi, expect) in [(12.0, 880.0), (-12.0, 220.0)] {
            let y = pitch_shift(&x, semi).unwrap();
            assert_eq!(y.len(), x.len());
            let (peak, bin) = peak_frequency(y.samples());
            assert!((peak - expect).abs() <= bin, "{semi}: peak {peak}");
        }
    }

    #[test]
    fn pitch_range_is_enforced() {
        let x = tone(440.0, 1000, 0.5);
        assert!(pitch_shift(&x, 12.5).is_err());
        assert!(pitch_shift(&x, -13.0).is_err());
    }

    #[test]
    fn notch_attenuates_center_only() {
        let n = SR as usize;
        let at = tone(1000.0, n, 0.5);
        let y = band_reject(&at, 1000.0, 5.0).unwrap();
        let drop = 10.0 * (at.power() / y.power()).log10();
        assert!(drop >= 20.0, "center drop {drop}");

        let far = tone(4000.0, n, 0.5);
        let y = band_reject(&far, 1000.0, 5.0).unwrap();
        let drop = 10.0 * (far.power() / y.power()).log10();
        assert!(drop <= 1.0, "far drop {drop}");
    }

    #[test]
    fn notch_keeps_dc_free_input_dc_free() {
        let x = tone(250.0, SR as usize, 0.5);
        let y = band_reject(&x, 1000.0, 2.0).unwrap();
        let mean = y.samples().iter().sum::<f64>() / y.len() as f64;
        assert!(mean.abs() < 1e-3);
    }

    #[test]
    fn notch_validates_arguments() {
        let x = tone(250.0, 100, 0.5);
        assert!(band_reject(&x, 8000.0, 2.0).is_err());
        assert!(band_reject(&x, 0.0, 2.0).is_err());
        assert!(band_reject(&x, 1000.0, 0.0).is_err());
    }
}
