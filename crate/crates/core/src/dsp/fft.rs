//! Thin helpers over `rustfft` for real-valued signals.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) fn forward(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse transform keeping the real part, scaled by `1/n`.
pub(crate) fn inverse_real(mut spec: Vec<Complex64>) -> Vec<f64> {
    let n = spec.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

/// Linear convolution of `x` with `h`, truncated to `x.len()` samples.
pub(crate) fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    let full = x.len() + h.len() - 1;
    let n = full.next_power_of_two();
    let mut xa = x.to_vec();
    xa.resize(n, 0.0);
    let mut ha = h.to_vec();
    ha.resize(n, 0.0);
    let xs = forward(&xa);
    let hs = forward(&ha);
    let prod = xs.iter().zip(&hs).map(|(a, b)| a * b).collect();
    let mut y = inverse_real(prod);
    y.truncate(x.len());
    y
}

/// Scale each positive-frequency bin by `gain(freq_hz)` and mirror onto the
/// negative frequencies, keeping the output real.
pub(crate) fn shape_spectrum(x: &[f64], sample_rate: f64, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut spec = forward(x);
    for k in 0..=n / 2 {
        let g = gain(k as f64 * sample_rate / n as f64);
        spec[k] *= g;
        if k != 0 && k != n - k {
            spec[n - k] *= g;
        }
    }
    inverse_real(spec)
}

/// Welch-averaged one-sided power spectrum with a Hann window.
#[cfg(test)]
pub(crate) fn welch_psd(x: &[f64], segment: usize) -> Vec<f64> {
    let win = hann(segment);
    let hop = segment / 2;
    let mut acc = vec![0.0; segment / 2 + 1];
    let mut count = 0usize;
    let mut start = 0;
    while start + segment <= x.len() {
        let frame: Vec<f64> = x[start..start + segment]
            .iter()
            .zip(&win)
            .map(|(a, w)| a * w)
            .collect();
        for (a, c) in acc.iter_mut().zip(forward(&frame)) {
            *a += c.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    acc.iter_mut().for_each(|a| *a /= count.max(1) as f64);
    acc
}

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_matches_direct_sum() {
        let x = [1.0, 2.0, -1.0, 0.5, 3.0];
        let h = [0.5, -0.25, 0.125];
        let y = convolve_truncated(&x, &h);
        for n in 0..x.len() {
            let direct: f64 = (0..h.len())
                .filter(|&k| k <= n)
                .map(|k| h[k] * x[n - k])
                .sum();
            assert!((y[n] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_gain_shaping_is_identity() {
        let x: Vec<f64> = (0..37).map(|i| (i as f64 * 0.3).sin()).collect();
        let y = shape_spectrum(&x, 16_000.0, |_| 1.0);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
