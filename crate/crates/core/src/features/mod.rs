//! Deterministic DSP layer: mel spectrograms, F0 tracks, mel-cepstra,
//! fixed-length training windows and Griffin-Lim inversion.

mod f0;
mod griffin_lim;
mod mcep;
mod mel;
mod stft;

pub use f0::{extract_f0, F0Track};
pub use griffin_lim::mel_to_waveform;
pub use mcep::{compute_mcep, McepSequence};
pub use mel::{
    compute_mel, fixed_window, hz_to_mel, mel_filterbank, mel_to_hz, MelSpectrogram, WindowMode,
    N_MELS,
};
pub use stft::Stft;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Analysis parameters shared by every feature extractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Magnitude floor applied before the logarithm; the log-floor is `ln(mel_floor)`.
    pub mel_floor: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    pub voicing_threshold: f64,
    pub mcep_order: usize,
    pub mcep_alpha: f64,
    pub griffin_lim_iters: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            win_length: 1024,
            hop_length: 256,
            n_mels: N_MELS,
            fmin: 0.0,
            fmax: 8000.0,
            mel_floor: 1e-5,
            f0_min: 50.0,
            f0_max: 600.0,
            voicing_threshold: 0.3,
            mcep_order: 25,
            mcep_alpha: 0.42,
            griffin_lim_iters: 60,
        }
    }
}

impl FeatureConfig {
    pub fn log_floor(&self) -> f64 {
        self.mel_floor.ln()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mels != N_MELS {
            return Err(Error::Config(format!("n_mels must be {N_MELS}, got {}", self.n_mels)));
        }
        if self.win_length == 0 || self.win_length > self.n_fft {
            return Err(Error::Config("win_length must be in 1..=n_fft".into()));
        }
        if self.hop_length == 0 {
            return Err(Error::Config("hop_length must be positive".into()));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= 8000.0) {
            return Err(Error::Config("mel range must satisfy 0 <= fmin < fmax <= 8000".into()));
        }
        if !(self.mel_floor > 0.0) {
            return Err(Error::Config("mel_floor must be positive".into()));
        }
        if !(self.f0_min > 0.0 && self.f0_min < self.f0_max) {
            return Err(Error::Config("f0 band must satisfy 0 < f0_min < f0_max".into()));
        }
        if self.mcep_order < 2 {
            return Err(Error::Config("mcep_order must be at least 2".into()));
        }
        if !(self.mcep_alpha.abs() < 1.0) {
            return Err(Error::Config("mcep_alpha must lie in (-1, 1)".into()));
        }
        Ok(())
    }

    /// Frames produced for `len` samples: `1 + (len - win) / hop`, or `None` if shorter than one window.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        (len >= self.win_length).then(|| 1 + (len - self.win_length) / self.hop_length)
    }

    pub(crate) fn require_frames(&self, len: usize) -> Result<usize> {
        self.frame_count(len).ok_or(Error::TooShort {
            what: "waveform samples",
            len,
            min: self.win_length,
        })
    }
}
