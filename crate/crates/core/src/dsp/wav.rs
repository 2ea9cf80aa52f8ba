//! 16-bit mono PCM WAV I/O.

use std::path::Path;

use super::audio::AudioBuffer;
use crate::error::{Error, Result};

const FULL_SCALE: f64 = 32768.0;

/// Read a mono 16-bit PCM file. When `expected_rate_hz` is given a different
/// file rate is an error; nothing is resampled.
pub fn read_wav(path: impl AsRef<Path>, expected_rate_hz: Option<u32>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Argument(format!(
            "{}: expected mono audio, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Argument(format!(
            "{}: expected 16-bit integer PCM, found {:?} {}-bit",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    if let Some(rate) = expected_rate_hz {
        if spec.sample_rate != rate {
            return Err(Error::Argument(format!(
                "{}: sample rate {} Hz does not match the configured {} Hz",
                path.display(),
                spec.sample_rate,
                rate
            )));
        }
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    AudioBuffer::new(samples, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in audio.samples() {
        writer.write_sample(to_pcm16(s))?;
    }
    writer.finalize()?;
    Ok(())
}

pub(crate) fn to_pcm16(x: f64) -> i16 {
    (x * FULL_SCALE).round().clamp(-FULL_SCALE, FULL_SCALE - 1.0) as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let samples: Vec<f64> = [-32768i16, -1, 0, 1, 12345, 32767]
            .iter()
            .map(|&v| v as f64 / FULL_SCALE)
            .collect();
        let a = AudioBuffer::new(samples, 16_000).unwrap();
        write_wav(&p, &a).unwrap();
        assert_eq!(read_wav(&p, Some(16_000)).unwrap(), a);
        assert!(read_wav(&p, Some(8_000)).is_err());
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for _ in 0..8 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(read_wav(&p, None).is_err());
    }

    #[test]
    fn clipping_saturates() {
        assert_eq!(to_pcm16(1.0), 32767);
        assert_eq!(to_pcm16(-1.5), -32768);
    }
}
