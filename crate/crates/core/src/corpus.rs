//! Utterance sources: a seeded synthetic speech-like corpus and WAV folders.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{read_wav, AudioBuffer};
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// RMS every synthetic utterance is scaled to.
pub const SYNTH_RMS: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_utterances: usize,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_utterances: 256,
            duration_s: 1.0,
            sample_rate_hz: 16_000,
            seed: 0,
        }
    }
}

/// Resonance gain of a formant at `center` with bandwidth `bw`.
fn formant_gain(f: f64, formants: &[(f64, f64)]) -> f64 {
    formants
        .iter()
        .map(|&(center, bw)| (-0.5 * ((f - center) / bw).powi(2)).exp())
        .sum::<f64>()
        + 0.02
}

/// One harmonic-plus-noise utterance: voiced syllables with gliding pitch and
/// formant-shaped harmonics, separated by short pauses, over a faint noise floor.
pub fn synth_utterance(duration_s: f64, sample_rate_hz: u32, seed: u64) -> Result<AudioBuffer> {
    if !(duration_s > 0.0) || sample_rate_hz == 0 {
        return Err(Error::Argument(format!(
            "utterance of {duration_s} s at {sample_rate_hz} Hz"
        )));
    }
    let sr = sample_rate_hz as f64;
    let n = (duration_s * sr).round() as usize;
    let mut rng = rng_for(seed, &[0x5711]);
    let mut out = vec![0.0; n];

    let speaker_f0 = rng.gen_range(90.0..250.0);
    let mut cursor = (rng.gen_range(0.02..0.08) * sr) as usize;
    while cursor < n {
        let len = ((rng.gen_range(0.10..0.25) * sr) as usize).min(n - cursor);
        let f0_start = speaker_f0 * rng.gen_range(0.85..1.15);
        let f0_end = f0_start * rng.gen_range(0.8..1.25);
        let formants = [
            (rng.gen_range(300.0..900.0), rng.gen_range(60.0..120.0)),
            (rng.gen_range(900.0..2500.0), rng.gen_range(80.0..180.0)),
            (rng.gen_range(2500.0..3500.0), rng.gen_range(120.0..250.0)),
        ];
        let loudness = rng.gen_range(0.5..1.0);
        let mut phase = 0.0;
        let mut gains = Vec::new();
        for i in 0..len {
            let u = i as f64 / len as f64;
            let f0 = f0_start + (f0_end - f0_start) * u;
            phase += 2.0 * PI * f0 / sr;
            if i % 64 == 0 {
                let n_harm = (4000.0 / f0) as usize;
                gains = (1..=n_harm)
                    .map(|h| formant_gain(h as f64 * f0, &formants) / (h as f64).sqrt())
                    .collect();
            }
            // sin(hφ) by the Chebyshev recurrence
            let two_cos = 2.0 * phase.cos();
            let (mut prev, mut cur) = (0.0, phase.sin());
            let mut v = 0.0;
            for g in &gains {
                v += g * cur;
                let next = two_cos * cur - prev;
                prev = cur;
                cur = next;
            }
            out[cursor + i] += (PI * u).sin().powi(2) * loudness * v;
        }
        cursor += len + (rng.gen_range(0.03..0.12) * sr) as usize;
    }

    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let gain = if rms > 0.0 { SYNTH_RMS / rms } else { 0.0 };
    let floor = SYNTH_RMS * 10f64.powf(-45.0 / 20.0);
    for v in &mut out {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = *v * gain + floor * z;
    }
    AudioBuffer::new(out, sample_rate_hz)
}

pub fn synthetic_corpus(cfg: &SynthConfig) -> Result<Vec<AudioBuffer>> {
    if cfg.n_utterances == 0 {
        return Err(Error::Argument("empty synthetic corpus".into()));
    }
    (0..cfg.n_utterances)
        .map(|i| {
            synth_utterance(
                cfg.duration_s,
                cfg.sample_rate_hz,
                crate::rng::derive_seed(cfg.seed, &[i as u64]),
            )
        })
        .collect()
}

/// Every `.wav` file directly inside `dir`, in file-name order.
pub fn load_wav_dir(dir: impl AsRef<Path>, sample_rate_hz: u32) -> Result<Vec<AudioBuffer>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Argument(format!("no .wav files in {}", dir.display())));
    }
    paths.iter().map(|p| read_wav(p, Some(sample_rate_hz))).collect()
}

/// Cut or zero-pad `audio` to exactly `len` samples starting at `offset`.
pub fn fixed_length(audio: &AudioBuffer, offset: usize, len: usize) -> Result<AudioBuffer> {
    let s = audio.samples();
    let mut out = vec![0.0; len];
    let start = offset.min(s.len());
    let take = (s.len() - start).min(len);
    out[..take].copy_from_slice(&s[start..start + take]);
    AudioBuffer::new(out, audio.sample_rate_hz())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utterances_are_seeded_and_normalized() {
        let a = synth_utterance(1.0, 16_000, 3).unwrap();
        let b = synth_utterance(1.0, 16_000, 3).unwrap();
        let c = synth_utterance(1.0, 16_000, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16_000);
        assert!((a.rms() - SYNTH_RMS).abs() < 0.01);
    }

    #[test]
    fn fixed_length_pads_and_crops() {
        let a = AudioBuffer::new(vec![1.0, 2.0, 3.0], 8).unwrap();
        assert_eq!(fixed_length(&a, 1, 4).unwrap().samples(), &[2.0, 3.0, 0.0, 0.0]);
        assert_eq!(fixed_length(&a, 0, 2).unwrap().samples(), &[1.0, 2.0]);
    }

    #[test]
    fn wav_dir_is_read_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in [("b.wav", 0.25), ("a.wav", 0.5)] {
            let buf = AudioBuffer::new(vec![v; 10], 16_000).unwrap();
            crate::dsp::write_wav(dir.path().join(name), &buf).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let c = load_wav_dir(dir.path(), 16_000).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].samples()[0], 0.5);
        assert!(load_wav_dir(dir.path(), 8_000).is_err());
    }
}
