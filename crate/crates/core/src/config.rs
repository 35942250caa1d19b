//! Run configuration: one TOML file with a section per component.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asv::{AsvConfig, AsvTrainConfig};
use crate::checkpoint::ConfigStamp;
use crate::conversion::ConversionConfig;
use crate::features::FeatureConfig;
use crate::speaker::SpeakerConfig;
use crate::training::{TrainingConfig, VcArch};
use crate::{Error, Result};

/// Overrides `paths.out_dir` when set.
pub const OUT_ROOT_ENV: &str = "DGCVC_OUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Directory laid out as `root/<speaker>/*.wav`.
    pub root: PathBuf,
    pub n_train_speakers: usize,
    pub split_seed: u64,
    /// Utterances per training speaker kept out of training.
    pub heldout_per_speaker: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("corpus"),
            n_train_speakers: 4,
            split_seed: 0,
            heldout_per_speaker: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub features: FeatureConfig,
    pub asv: AsvConfig,
    pub asv_train: AsvTrainConfig,
    pub speaker: SpeakerConfig,
    pub conversion: ConversionConfig,
    pub training: TrainingConfig,
    pub corpus: CorpusConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.asv.validate()?;
        self.asv_train.validate()?;
        self.speaker.validate()?;
        self.conversion.validate()?;
        self.training.validate()?;
        if self.corpus.n_train_speakers < 2 {
            return Err(Error::Config("corpus.n_train_speakers must be at least 2".into()));
        }
        if self.speaker.variant.needs_asv() && self.asv.window < self.speaker.min_frames() {
            return Err(Error::Config(format!(
                "asv.window {} is shorter than the {} frames the reference encoder needs",
                self.asv.window,
                self.speaker.min_frames()
            )));
        }
        Ok(())
    }

    pub fn vc_arch(&self) -> VcArch {
        VcArch {
            conversion: self.conversion.clone(),
            speaker: self.speaker.clone(),
        }
    }

    /// SHA-256 of the canonical JSON form and the snapshot itself.
    pub fn stamp(&self) -> Result<ConfigStamp> {
        ConfigStamp::of(self)
    }

    /// Output root, honoring the environment override.
    pub fn out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_ROOT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.paths.out_dir.clone(),
        }
    }
}
