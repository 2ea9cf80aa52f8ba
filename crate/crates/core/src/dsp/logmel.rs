//! Log-mel filterbank features.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::audio::AudioBuffer;
use super::fft::hann;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor added to mel energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Reusable log-mel extractor: Hann-windowed STFT, power spectrum, HTK mel
/// triangles spanning 0 Hz to Nyquist, `ln(mel + 1e-10)`.
#[derive(Clone)]
pub struct LogMel {
    sample_rate_hz: u32,
    frame: usize,
    hop: usize,
    n_fft: usize,
    n_mels: usize,
    window: Vec<f64>,
    /// `n_mels × (n_fft/2 + 1)` weights
    filters: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LogMel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogMel")
            .field("sample_rate_hz", &self.sample_rate_hz)
            .field("frame", &self.frame)
            .field("hop", &self.hop)
            .field("n_fft", &self.n_fft)
            .field("n_mels", &self.n_mels)
            .finish()
    }
}

impl LogMel {
    pub fn new(sample_rate_hz: u32, n_mels: usize, frame_ms: f64, hop_ms: f64) -> Result<Self> {
        let sr = sample_rate_hz as f64;
        let frame = (frame_ms * sr / 1000.0).round() as usize;
        let hop = (hop_ms * sr / 1000.0).round() as usize;
        if frame < 2 || hop == 0 || n_mels == 0 {
            return Err(Error::Argument(format!(
                "log-mel needs frame ≥ 2, hop ≥ 1 samples and at least one band \
                 (frame {frame}, hop {hop}, bands {n_mels})"
            )));
        }
        let n_fft = frame.next_power_of_two();
        let bins = n_fft / 2 + 1;
        let mel_max = hz_to_mel(sr / 2.0);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
            .collect();
        let filters = (0..n_mels)
            .map(|m| {
                let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..bins)
                    .map(|k| {
                        let f = k as f64 * sr / n_fft as f64;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= center {
                            (f - lo) / (center - lo)
                        } else {
                            (hi - f) / (hi - center)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            sample_rate_hz,
            frame,
            hop,
            n_fft,
            n_mels,
            window: hann(frame),
            filters,
            fft: FftPlanner::new().plan_fft_forward(n_fft),
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn frame_len(&self) -> usize {
        self.frame
    }

    pub fn hop_len(&self) -> usize {
        self.hop
    }

    pub fn num_frames(&self, samples: usize) -> Option<usize> {
        (samples >= self.frame).then(|| (samples - self.frame) / self.hop + 1)
    }

    /// Center frequency of each mel band in Hz.
    pub fn band_centers_hz(&self) -> Vec<f64> {
        let mel_max = hz_to_mel(self.sample_rate_hz as f64 / 2.0);
        (1..=self.n_mels)
            .map(|i| mel_to_hz(mel_max * i as f64 / (self.n_mels + 1) as f64))
            .collect()
    }

    /// `T × n_mels` features.
    pub fn compute(&self, signal: &AudioBuffer) -> Result<Tensor> {
        if signal.sample_rate_hz() != self.sample_rate_hz {
            return Err(Error::Argument(format!(
                "log-mel configured for {} Hz, got {} Hz",
                self.sample_rate_hz,
                signal.sample_rate_hz()
            )));
        }
        let frames = self.num_frames(signal.len()).ok_or_else(|| {
            Error::Argument(format!(
                "signal of {} samples is shorter than one {}-sample frame",
                signal.len(),
                self.frame
            ))
        })?;
        let x = signal.samples();
        let mut out = Vec::with_capacity(frames * self.n_mels);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        let mut power = vec![0.0; self.n_fft / 2 + 1];
        for t in 0..frames {
            let start = t * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < self.frame {
                    Complex64::new(x[start + i] * self.window[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for filt in &self.filters {
                let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
                out.push((e + LOG_FLOOR).ln());
            }
        }
        Tensor::new(&[frames, self.n_mels], out)
    }
}

/// One-shot log-mel extraction; see [`LogMel`].
pub fn logmel_frontend(signal: &AudioBuffer, n_mels: usize, frame_ms: f64, hop_ms: f64) -> Result<Tensor> {
    LogMel::new(signal.sample_rate_hz(), n_mels, frame_ms, hop_ms)?.compute(signal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn silence_hits_the_floor() {
        let x = AudioBuffer::new(vec![0.0; 4000], 16_000).unwrap();
        let f = logmel_frontend(&x, 40, 25.0, 10.0).unwrap();
        assert!(f.data().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn one_second_gives_98_frames() {
        let x = AudioBuffer::new(vec![0.1; 16_000], 16_000).unwrap();
        let f = logmel_frontend(&x, 40, 25.0, 10.0).unwrap();
        assert_eq!(f.shape(), &[98, 40]);
    }

    #[test]
    fn tone_energy_lands_in_its_band() {
        let lm = LogMel::new(16_000, 40, 25.0, 10.0).unwrap();
        let centers = lm.band_centers_hz();
        for freq in [300.0, 1000.0, 3000.0] {
            let x = AudioBuffer::new(
                (0..8000).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16_000.0).sin()).collect(),
                16_000,
            )
            .unwrap();
            let f = lm.compute(&x).unwrap();
            let row = f.index_axis0(10).unwrap();
            let argmax = row
                .data()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            let nearest = centers
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - freq).abs().total_cmp(&(b.1 - freq).abs()))
                .unwrap()
                .0;
            assert!(argmax.abs_diff(nearest) <= 1, "{freq} Hz: band {argmax} vs {nearest}");
        }
    }

    #[test]
    fn too_short_is_rejected() {
        let x = AudioBuffer::new(vec![0.1; 399], 16_000).unwrap();
        assert!(logmel_frontend(&x, 40, 25.0, 10.0).is_err());
        let x = AudioBuffer::new(vec![0.1; 400], 16_000).unwrap();
        assert_eq!(logmel_frontend(&x, 40, 25.0, 10.0).unwrap().shape(), &[1, 40]);
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 100.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }
}
