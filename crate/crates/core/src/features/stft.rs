use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::FeatureConfig;

/// Short-time Fourier transform without edge padding: frame `t` covers
/// samples `[t * hop, t * hop + win)`, weighted by a periodic Hann window.
pub struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: &FeatureConfig) -> Self {
        let win = cfg.win_length;
        let window = (0..win)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos())
            .collect();
        let mut planner = FftPlanner::new();
        Self {
            n_fft: cfg.n_fft,
            hop: cfg.hop_length,
            window,
            forward: planner.plan_fft_forward(cfg.n_fft),
            inverse: planner.plan_fft_inverse(cfg.n_fft),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> usize {
        let win = self.window.len();
        if len < win {
            0
        } else {
            1 + (len - win) / self.hop
        }
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// One-sided complex spectra, `[frames][bins]`.
    pub fn complex(&self, x: &[f64]) -> Vec<Vec<Complex64>> {
        let frames = self.n_frames(x.len());
        let mut scratch = vec![Complex64::default(); self.forward.get_inplace_scratch_len()];
        (0..frames)
            .map(|t| {
                let start = t * self.hop;
                let mut buf = vec![Complex64::default(); self.n_fft];
                for (i, w) in self.window.iter().enumerate() {
                    buf[i] = Complex64::new(x[start + i] * w, 0.0);
                }
                self.forward.process_with_scratch(&mut buf, &mut scratch);
                buf.truncate(self.n_bins());
                buf
            })
            .collect()
    }

    /// Magnitude spectrogram `[frames, bins]`.
    pub fn magnitude(&self, x: &[f64]) -> Array2<f64> {
        let spec = self.complex(x);
        let mut out = Array2::zeros((spec.len(), self.n_bins()));
        for (t, frame) in spec.iter().enumerate() {
            for (k, c) in frame.iter().enumerate() {
                out[[t, k]] = c.norm();
            }
        }
        out
    }

    /// Weighted overlap-add inverse of one-sided spectra.
    pub fn inverse(&self, spec: &[Vec<Complex64>]) -> Vec<f64> {
        let win = self.window.len();
        if spec.is_empty() {
            return Vec::new();
        }
        let len = win + (spec.len() - 1) * self.hop;
        let mut out = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut scratch = vec![Complex64::default(); self.inverse.get_inplace_scratch_len()];
        for (t, frame) in spec.iter().enumerate() {
            let mut buf = vec![Complex64::default(); self.n_fft];
            buf[..frame.len()].copy_from_slice(frame);
            for k in 1..self.n_fft - frame.len() + 1 {
                buf[self.n_fft - k] = frame[k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * self.hop;
            for i in 0..win {
                let w = self.window[i];
                out[start + i] += buf[i].re / self.n_fft as f64 * w;
                norm[start + i] += w * w;
            }
        }
        for (o, n) in out.iter_mut().zip(&norm) {
            if *n > 1e-3 {
                *o /= n;
            } else {
                *o = 0.0;
            }
        }
        out
    }
}
