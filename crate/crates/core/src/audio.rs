//! Waveform container and 16-bit PCM WAV input/output.

use std::path::Path;

use audioadapter_buffers::direct::InterleavedSlice;
use rubato::{Fft, FixedSync, Resampler};

use crate::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio at 16 kHz with finite samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
}

impl Waveform {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::TooShort {
                what: "waveform",
                len: 0,
                min: 1,
            });
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Shape(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples })
    }

    /// Builds a 16 kHz waveform from audio at any rate.
    pub fn from_rate(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == SAMPLE_RATE {
            return Self::new(samples);
        }
        Self::new(resample(&samples, sample_rate, SAMPLE_RATE)?)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
        }
    }

    /// Reads a PCM or float WAV file, downmixing to mono and resampling to 16 kHz.
    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = hound::WavReader::open(path.as_ref())?;
        let spec = reader.spec();
        let channels = spec.channels.max(1) as usize;
        let raw: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()?
            }
            hound::SampleFormat::Float => reader
                .samples::<f32>()
                .map(|s| s.map(|v| v as f64))
                .collect::<std::result::Result<_, _>>()?,
        };
        let mono: Vec<f64> = raw
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect();
        Self::from_rate(mono, spec.sample_rate)
    }

    /// Writes 16-bit mono PCM; samples are clipped to [-1, 1].
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: SAMPLE_RATE,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
        for &s in &self.samples {
            writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
        }
        writer.finalize()?;
        Ok(())
    }
}

fn resample(samples: &[f64], from: u32, to: u32) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::TooShort {
            what: "waveform",
            len: 0,
            min: 1,
        });
    }
    let input = InterleavedSlice::new(samples, 1, samples.len())
        .map_err(|e| Error::Shape(format!("resampler input: {e}")))?;
    let mut resampler = Fft::<f64>::new(from as usize, to as usize, 1024, 1, FixedSync::Input)
        .map_err(|e| Error::Config(format!("resampler: {e}")))?;
    let out = resampler
        .process_all(&input, samples.len(), None)
        .map_err(|e| Error::Shape(format!("resampling failed: {e}")))?;
    Ok(out.take_data())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(Waveform::new(vec![]), Err(Error::TooShort { .. })));
        assert!(Waveform::new(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn wav_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let w = Waveform::new((0..800).map(|i| 0.5 * (i as f64 * 0.05).sin()).collect()).unwrap();
        w.write_wav(&path).unwrap();
        let r = Waveform::read_wav(&path).unwrap();
        assert_eq!(r.len(), w.len());
        for (a, b) in r.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() < 1.0 / 32767.0);
        }
    }

    #[test]
    fn resamples_to_16k() {
        let sr = 22_050u32;
        let n = sr as usize / 2;
        let tone: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin())
            .collect();
        let w = Waveform::from_rate(tone, sr).unwrap();
        let expected = (n as f64 * 16_000.0 / sr as f64).ceil() as isize;
        assert!((w.len() as isize - expected).abs() <= 1, "{} vs {}", w.len(), expected);
    }
}
