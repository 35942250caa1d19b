use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{FeatureConfig, Stft};
use crate::audio::Waveform;
use crate::{Error, Result};

/// Cepstral lifter length used to smooth harmonics out of the log spectrum.
const LIFTER: usize = 30;
/// Points on the warped frequency axis used for the cosine projection.
const GRID: usize = 512;
/// Power floor relative to the frame's peak bin, so a gain change cancels exactly.
const POWER_FLOOR: f64 = 1e-10;

/// Mel-cepstral coefficients `c0..c{order-1}`, one row per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct McepSequence {
    coeffs: Array2<f64>,
}

impl McepSequence {
    pub fn new(coeffs: Array2<f64>) -> Result<Self> {
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("mel-cepstra must be finite".into()));
        }
        Ok(Self { coeffs })
    }

    /// `[frames, order]`.
    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn n_frames(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn order(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.nrows() == 0
    }
}

/// Inverse all-pass warp: linear frequency for warped frequency `theta`.
fn unwarp(theta: f64, alpha: f64) -> f64 {
    theta - 2.0 * (alpha * theta.sin()).atan2(1.0 + alpha * theta.cos())
}

/// Mel-cepstra from the cepstrally smoothed log envelope.
///
/// Per frame: real cepstrum of the log amplitude spectrum, liftered to
/// `LIFTER` quefrencies, evaluated on an all-pass warped frequency grid and
/// projected onto cosines so that `ln|H| = c0 + sum_m c_m cos(m theta)`.
/// A gain change only moves `c0`.
pub fn compute_mcep(w: &Waveform, cfg: &FeatureConfig) -> Result<McepSequence> {
    cfg.require_frames(w.len())?;
    let stft = Stft::new(cfg);
    let mag = stft.magnitude(w.samples());
    let n_fft = cfg.n_fft;
    let lifter = LIFTER.min(n_fft / 2);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);

    // cos(n * omega(theta)) for the liftered cepstrum, and cos(m * theta) for the projection
    let thetas: Vec<f64> = (0..GRID).map(|i| PI * (i as f64 + 0.5) / GRID as f64).collect();
    let omegas: Vec<f64> = thetas.iter().map(|&t| unwarp(t, cfg.mcep_alpha)).collect();
    let env_basis = Array2::from_shape_fn((lifter, GRID), |(n, g)| {
        let scale = if n == 0 { 1.0 } else { 2.0 };
        scale * (n as f64 * omegas[g]).cos()
    });
    let order = cfg.mcep_order;
    let proj = Array2::from_shape_fn((GRID, order), |(g, m)| {
        let scale = if m == 0 { 1.0 } else { 2.0 };
        scale * (m as f64 * thetas[g]).cos() / GRID as f64
    });

    let frames = mag.nrows();
    let mut ceps = Array2::zeros((frames, lifter));
    let mut buf = vec![Complex64::default(); n_fft];
    for t in 0..frames {
        let row = mag.row(t);
        let peak = row.iter().fold(0.0f64, |m, &v| m.max(v * v));
        let eps = POWER_FLOOR * peak + f64::MIN_POSITIVE;
        for (k, slot) in buf.iter_mut().enumerate() {
            let bin = if k <= n_fft / 2 { k } else { n_fft - k };
            let p = row[bin] * row[bin];
            *slot = Complex64::new(0.5 * (p + eps).ln(), 0.0);
        }
        ifft.process(&mut buf);
        for n in 0..lifter {
            ceps[[t, n]] = buf[n].re / n_fft as f64;
        }
    }
    let envelope = ceps.dot(&env_basis);
    McepSequence::new(envelope.dot(&proj))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn voiced_signal() -> Waveform {
        let mut state = 12345u64;
        let samples = (0..12_000)
            .map(|i| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let noise = ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5;
                let t = i as f64 / 16_000.0;
                (1..20)
                    .map(|k| (2.0 * PI * 150.0 * k as f64 * t).sin() / k as f64)
                    .sum::<f64>()
                    * 0.2
                    + 0.01 * noise
            })
            .collect();
        Waveform::new(samples).unwrap()
    }

    #[test]
    fn deterministic_and_fixed_order() {
        let cfg = FeatureConfig::default();
        let w = voiced_signal();
        let a = compute_mcep(&w, &cfg).unwrap();
        let b = compute_mcep(&w, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.order(), 25);
        assert_eq!(a.n_frames(), cfg.frame_count(w.len()).unwrap());
    }

    #[test]
    fn gain_moves_only_c0() {
        let cfg = FeatureConfig::default();
        let w = voiced_signal();
        let a = compute_mcep(&w, &cfg).unwrap();
        let b = compute_mcep(&w.scaled(0.5), &cfg).unwrap();
        let mut c0_shift = 0.0f64;
        for t in 0..a.n_frames() {
            c0_shift = c0_shift.max((a.coeffs()[[t, 0]] - b.coeffs()[[t, 0]]).abs());
            for m in 1..25 {
                let d = (a.coeffs()[[t, m]] - b.coeffs()[[t, m]]).abs();
                assert!(d < 1e-6, "frame {t} c{m} moved by {d}");
            }
        }
        // ln 0.5 exactly, up to the power epsilon
        assert!((c0_shift - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn too_short_is_an_error() {
        let cfg = FeatureConfig::default();
        assert!(compute_mcep(&Waveform::new(vec![0.1; 10]).unwrap(), &cfg).is_err());
    }
}
