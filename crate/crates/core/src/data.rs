//! Feature caching and network-side mel scaling.

use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use crate::audio::Waveform;
use crate::corpus::{Corpus, Speaker};
use crate::features::{compute_mel, fixed_window, FeatureConfig, MelSpectrogram, WindowMode};
use crate::nn::Real;
use crate::Result;

/// Maps log-mel values so the floor lands on -1 and unit magnitude on +1.
pub fn normalize_mel(log_mel: &Array2<f64>, cfg: &FeatureConfig) -> Array2<f64> {
    let half = -cfg.log_floor() / 2.0;
    log_mel.mapv(|v| v / half + 1.0)
}

/// Inverse of [`normalize_mel`].
pub fn denormalize_mel(net: &Array2<f64>, cfg: &FeatureConfig) -> Array2<f64> {
    let half = -cfg.log_floor() / 2.0;
    net.mapv(|v| (v - 1.0) * half)
}

/// Stacks equally long `[T, D]` matrices into a `[B, T, D]` tensor of `F`.
pub fn stack<F: Real>(items: &[Array2<f64>]) -> Array3<F> {
    let views: Vec<_> = items.iter().map(|m| m.view()).collect();
    ndarray::stack(Axis(0), &views)
        .expect("equal shapes")
        .mapv(F::of)
}

/// Mel spectrograms of one speaker split into training and held-out utterances.
#[derive(Clone, Debug)]
pub struct SpeakerMels {
    pub id: String,
    pub train: Vec<MelSpectrogram>,
    pub heldout: Vec<MelSpectrogram>,
}

pub fn load_mel(path: &std::path::Path, cfg: &FeatureConfig) -> Result<MelSpectrogram> {
    compute_mel(&Waveform::read_wav(path)?, cfg)
}

/// Loads the training and held-out utterances of `speakers`.
pub fn load_speaker_mels(corpus: &Corpus, speakers: &[&Speaker], cfg: &FeatureConfig) -> Result<Vec<SpeakerMels>> {
    speakers
        .iter()
        .map(|s| {
            let load = |paths: &[std::path::PathBuf]| paths.iter().map(|p| load_mel(p, cfg)).collect::<Result<Vec<_>>>();
            Ok(SpeakerMels {
                id: s.id.clone(),
                train: load(corpus.train_utterances(s))?,
                heldout: load(corpus.heldout_utterances(s))?,
            })
        })
        .collect()
}

/// Normalized fixed-length window and the count of real (unpadded) frames.
pub fn window(
    m: &MelSpectrogram,
    len: usize,
    mode: WindowMode,
    cfg: &FeatureConfig,
    rng: &mut impl Rng,
) -> Result<(Array2<f64>, usize)> {
    let (w, valid) = fixed_window(m, len, mode, cfg.log_floor(), rng)?;
    Ok((normalize_mel(&w, cfg), valid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_round_trip() {
        let cfg = FeatureConfig::default();
        let x = Array2::from_shape_fn((3, 4), |(i, j)| cfg.log_floor() + (i * 4 + j) as f64);
        let n = normalize_mel(&x, &cfg);
        assert!((n[[0, 0]] + 1.0).abs() < 1e-12);
        assert!((denormalize_mel(&n, &cfg) - &x).iter().all(|d| d.abs() < 1e-12));
        let zero = normalize_mel(&Array2::zeros((1, 1)), &cfg);
        assert_eq!(zero[[0, 0]], 1.0);
    }
}
