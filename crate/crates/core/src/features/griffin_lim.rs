use nalgebra::DMatrix;
use ndarray::Array2;
use rustfft::num_complex::Complex64;

use super::{mel_filterbank, FeatureConfig, MelSpectrogram, Stft};
use crate::audio::Waveform;
use crate::Result;

const MOMENTUM: f64 = 0.99;

/// Least-squares linear magnitudes for a log-mel spectrogram, clamped at zero.
fn linear_magnitudes(m: &MelSpectrogram, cfg: &FeatureConfig) -> Array2<f64> {
    let (fb, _) = mel_filterbank(cfg);
    let (rows, cols) = fb.dim();
    let dm = DMatrix::from_fn(rows, cols, |i, j| fb[[i, j]]);
    let pinv = dm.pseudo_inverse(1e-8).expect("filterbank pseudo-inverse");
    let pinv = Array2::from_shape_fn((cols, rows), |(i, j)| pinv[(i, j)]);
    let floor = cfg.mel_floor;
    // magnitudes at the floor are treated as silence
    let mel = m.frames().mapv(|v| (v.exp() - floor).max(0.0));
    mel.dot(&pinv.t()).mapv(|v| v.max(0.0))
}

/// Fast Griffin-Lim phase reconstruction, starting from zero phase.
/// The output has `win + (frames - 1) * hop` samples, so recomputing the mel
/// spectrogram yields the same number of frames.
pub fn mel_to_waveform(m: &MelSpectrogram, cfg: &FeatureConfig, iterations: usize) -> Result<Waveform> {
    let stft = Stft::new(cfg);
    let target = linear_magnitudes(m, cfg);
    let (frames, bins) = target.dim();
    let mut spec: Vec<Vec<Complex64>> = (0..frames)
        .map(|t| (0..bins).map(|k| Complex64::new(target[[t, k]], 0.0)).collect())
        .collect();
    let mut prev: Option<Vec<Vec<Complex64>>> = None;
    for _ in 0..iterations {
        let x = stft.inverse(&spec);
        let rebuilt = stft.complex(&x);
        let accel: Vec<Vec<Complex64>> = match &prev {
            Some(p) => rebuilt
                .iter()
                .zip(p)
                .map(|(r, q)| r.iter().zip(q).map(|(a, b)| a + (a - b) * MOMENTUM).collect())
                .collect(),
            None => rebuilt.clone(),
        };
        prev = Some(rebuilt);
        for (t, frame) in accel.iter().enumerate() {
            for (k, c) in frame.iter().enumerate() {
                let n = c.norm();
                let phase = if n > 1e-12 { c / n } else { Complex64::new(1.0, 0.0) };
                spec[t][k] = phase * target[[t, k]];
            }
        }
    }
    Waveform::new(stft.inverse(&spec))
}
