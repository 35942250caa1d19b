use ndarray::{s, Array2};
use rand::Rng;

use super::{FeatureConfig, Stft};
use crate::audio::{Waveform, SAMPLE_RATE};
use crate::{Error, Result};

pub const N_MELS: usize = 80;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters `[n_mels, n_fft / 2 + 1]` with unit peaks, plus the
/// center frequency of each filter in Hz.
pub fn mel_filterbank(cfg: &FeatureConfig) -> (Array2<f64>, Vec<f64>) {
    let n_bins = cfg.n_fft / 2 + 1;
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = SAMPLE_RATE as f64 / cfg.n_fft as f64;
    let mut fb = Array2::zeros((cfg.n_mels, n_bins));
    for m in 0..cfg.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let up = (f - left) / (center - left);
            let down = (right - f) / (right - center);
            fb[[m, k]] = up.min(down).max(0.0);
        }
    }
    (fb, edges[1..=cfg.n_mels].to_vec())
}

/// Log-compressed mel magnitudes, one row per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    frames: Array2<f64>,
    hop_size: usize,
}

impl MelSpectrogram {
    pub fn new(frames: Array2<f64>, hop_size: usize) -> Result<Self> {
        if frames.ncols() != N_MELS {
            return Err(Error::Shape(format!(
                "mel spectrogram needs {N_MELS} channels, got {}",
                frames.ncols()
            )));
        }
        if frames.nrows() == 0 {
            return Err(Error::TooShort {
                what: "mel frames",
                len: 0,
                min: 1,
            });
        }
        Ok(Self { frames, hop_size })
    }

    /// `[frames, 80]`.
    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn hop_size(&self) -> usize {
        self.hop_size
    }
}

pub fn compute_mel(w: &Waveform, cfg: &FeatureConfig) -> Result<MelSpectrogram> {
    cfg.require_frames(w.len())?;
    let stft = Stft::new(cfg);
    let mag = stft.magnitude(w.samples());
    let (fb, _) = mel_filterbank(cfg);
    let floor = cfg.mel_floor;
    let mel = mag.dot(&fb.t()).mapv(|v| v.max(floor).ln());
    MelSpectrogram::new(mel, cfg.hop_length)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowMode {
    /// Uniformly random start frame.
    Train,
    /// Start at frame 0.
    Eval,
}

/// Crops (or pads with the log-floor) a mel spectrogram to exactly `len`
/// frames. Returns the window and the number of frames taken from the input.
pub fn fixed_window(
    m: &MelSpectrogram,
    len: usize,
    mode: WindowMode,
    floor: f64,
    rng: &mut impl Rng,
) -> Result<(Array2<f64>, usize)> {
    if len == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    let t = m.n_frames();
    let mut out = Array2::from_elem((len, N_MELS), floor);
    if t >= len {
        let start = match mode {
            WindowMode::Train => rng.random_range(0..=t - len),
            WindowMode::Eval => 0,
        };
        out.assign(&m.frames().slice(s![start..start + len, ..]));
        Ok((out, len))
    } else {
        out.slice_mut(s![..t, ..]).assign(m.frames());
        Ok((out, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sine(freq: f64, n: usize) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16_000.0).sin())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn frame_count_formula() {
        let cfg = FeatureConfig::default();
        let m = compute_mel(&sine(300.0, 16_384), &cfg).unwrap();
        assert_eq!(m.n_frames(), 61);
        assert_eq!(m.frames().ncols(), 80);
    }

    #[test]
    fn silence_hits_the_floor() {
        let cfg = FeatureConfig::default();
        let m = compute_mel(&Waveform::new(vec![0.0; 16_000]).unwrap(), &cfg).unwrap();
        assert!(m.frames().iter().all(|&v| v == cfg.log_floor()));
    }

    #[test]
    fn too_short_is_an_error() {
        let cfg = FeatureConfig::default();
        let err = compute_mel(&Waveform::new(vec![0.1; 1000]).unwrap(), &cfg).unwrap_err();
        assert!(matches!(err, Error::TooShort { min: 1024, .. }));
    }

    #[test]
    fn tone_peaks_in_nearest_filter() {
        let cfg = FeatureConfig::default();
        // centers straight from the HTK formula, independent of the filterbank code
        let hi = 2595.0 * (1.0f64 + 8000.0 / 700.0).log10();
        let nearest = (1..=80)
            .map(|i| {
                let mel = hi * i as f64 / 81.0;
                700.0 * (10f64.powf(mel / 2595.0) - 1.0)
            })
            .enumerate()
            .min_by(|a, b| (a.1 - 440.0).abs().total_cmp(&(b.1 - 440.0).abs()))
            .unwrap()
            .0;
        let m = compute_mel(&sine(440.0, 16_000), &cfg).unwrap();
        for row in m.frames().rows() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, nearest);
        }
    }

    #[test]
    fn windows_crop_and_pad() {
        let floor = (1e-5f64).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let make = |t: usize| {
            MelSpectrogram::new(Array2::from_shape_fn((t, 80), |(i, j)| (i * 80 + j) as f64), 256).unwrap()
        };
        let m160 = make(160);
        let (w, valid) = fixed_window(&m160, 160, WindowMode::Train, floor, &mut rng).unwrap();
        assert_eq!((&w, valid), (m160.frames(), 160));

        let m100 = make(100);
        let (w, valid) = fixed_window(&m100, 160, WindowMode::Train, floor, &mut rng).unwrap();
        assert_eq!(valid, 100);
        assert_eq!(w.slice(s![..100, ..]), m100.frames().view());
        assert!(w.slice(s![100.., ..]).iter().all(|&v| v == floor));

        let m400 = make(400);
        let (w, _) = fixed_window(&m400, 160, WindowMode::Eval, floor, &mut rng).unwrap();
        assert_eq!(w, m400.frames().slice(s![..160, ..]));
        let (w, _) = fixed_window(&m400, 160, WindowMode::Train, floor, &mut rng).unwrap();
        assert_eq!(w.dim(), (160, 80));
    }
}
