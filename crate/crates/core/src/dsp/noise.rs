//! Seeded synthetic noise sources standing in for recorded noise corpora.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::audio::{power, AudioBuffer};
use super::fft;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// i.i.d. standard normal samples
    Gaussian,
    /// i.i.d. uniform samples (flat spectrum, non-Gaussian amplitude)
    White,
    /// 1/f power spectrum
    Pink,
    /// several band-limited, slowly amplitude-modulated streams
    Babble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::Gaussian,
        NoiseKind::White,
        NoiseKind::Pink,
        NoiseKind::Babble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Babble => "babble",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown noise kind `{s}`")))
    }
}

pub const BABBLE_STREAMS: usize = 6;

/// Unit-RMS noise of `length` samples, fully determined by `seed`.
pub fn synth_noise(kind: NoiseKind, length: usize, sample_rate_hz: u32, seed: u64) -> Result<AudioBuffer> {
    if length == 0 {
        return Err(Error::Argument("noise length must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = sample_rate_hz as f64;
    let raw = match kind {
        NoiseKind::Gaussian => gaussian(&mut rng, length),
        NoiseKind::White => (0..length).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        NoiseKind::Pink => {
            let w = gaussian(&mut rng, length);
            fft::shape_spectrum(&w, sr, |f| if f > 0.0 { 1.0 / f.sqrt() } else { 0.0 })
        }
        NoiseKind::Babble => babble(&mut rng, length, sr),
    };
    AudioBuffer::new(unit_rms(raw), sample_rate_hz)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn babble(rng: &mut ChaCha8Rng, length: usize, sr: f64) -> Vec<f64> {
    let mut mix = vec![0.0; length];
    let nyquist = sr / 2.0;
    for _ in 0..BABBLE_STREAMS {
        let center = rng.gen_range(250.0..3500.0f64).min(0.8 * nyquist);
        let width = rng.gen_range(120.0..400.0f64);
        let rate = rng.gen_range(2.0..6.0f64);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let w = gaussian(rng, length);
        let band = fft::shape_spectrum(&w, sr, |f| {
            let z = (f - center) / width;
            (-0.5 * z * z).exp()
        });
        let band = unit_rms(band);
        for (i, (m, b)) in mix.iter_mut().zip(band).enumerate() {
            let env = 0.5 * (1.0 + (2.0 * PI * rate * i as f64 / sr + phase).sin());
            *m += b * env * env;
        }
    }
    mix
}

fn unit_rms(mut x: Vec<f64>) -> Vec<f64> {
    let p = power(&x);
    if p > 0.0 {
        let g = 1.0 / p.sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
    x
}
