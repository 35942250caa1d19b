use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dtw::{dtw_align, mcd_along, f0_mae};
use super::table_io::write_with_hash;
use crate::audio::Waveform;
use crate::corpus::GenderPair;
use crate::features::{compute_mcep, extract_f0, FeatureConfig};
use crate::{Error, Result};

/// Objective scores for one converted utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub source: String,
    pub target_speaker: String,
    pub reference: String,
    pub gender: Option<GenderPair>,
    pub mcd_db: f64,
    /// Absent when no aligned frame pair is voiced in both utterances.
    pub f0_mae_hz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_pairs: usize,
    pub mcd_db: f64,
    pub n_f0_pairs: usize,
    pub f0_mae_hz: Option<f64>,
}

impl Aggregate {
    /// Plain means over `pairs` in order; `None` for an empty selection.
    pub fn of<'a>(pairs: impl IntoIterator<Item = &'a PairResult>) -> Option<Self> {
        let pairs: Vec<&PairResult> = pairs.into_iter().collect();
        if pairs.is_empty() {
            return None;
        }
        let mcd = pairs.iter().map(|p| p.mcd_db).sum::<f64>() / pairs.len() as f64;
        let f0: Vec<f64> = pairs.iter().filter_map(|p| p.f0_mae_hz).collect();
        Some(Self {
            n_pairs: pairs.len(),
            mcd_db: mcd,
            n_f0_pairs: f0.len(),
            f0_mae_hz: (!f0.is_empty()).then(|| f0.iter().sum::<f64>() / f0.len() as f64),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub checkpoint_hash: String,
    pub config_hash: String,
    pub pairs: Vec<PairResult>,
    pub avg: Aggregate,
    /// Cross-gender pairs; absent without gender tags.
    pub inter: Option<Aggregate>,
    /// Same-gender pairs; absent without gender tags.
    pub intra: Option<Aggregate>,
}

impl EvalReport {
    pub fn new(variant: &str, checkpoint_hash: &str, config_hash: &str, pairs: Vec<PairResult>) -> Result<Self> {
        let avg = Aggregate::of(&pairs).ok_or_else(|| Error::InsufficientData("report has no conversion pairs".into()))?;
        let inter = Aggregate::of(pairs.iter().filter(|p| p.gender.is_some_and(|g| g.is_inter())));
        let intra = Aggregate::of(pairs.iter().filter(|p| p.gender.is_some_and(|g| !g.is_inter())));
        Ok(Self {
            variant: variant.to_owned(),
            checkpoint_hash: checkpoint_hash.to_owned(),
            config_hash: config_hash.to_owned(),
            pairs,
            avg,
            inter,
            intra,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// One row per pair followed by the `Avg`, `Inter` and `Intra` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["kind", "source", "target_speaker", "reference", "gender", "mcd_db", "f0_mae_hz"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.pairs {
            w.write_record([
                "pair",
                &p.source,
                &p.target_speaker,
                &p.reference,
                &p.gender.map(|g| g.to_string()).unwrap_or_default(),
                &p.mcd_db.to_string(),
                &opt(p.f0_mae_hz),
            ])?;
        }
        for (kind, agg) in [("Avg", Some(&self.avg)), ("Inter", self.inter.as_ref()), ("Intra", self.intra.as_ref())] {
            if let Some(a) = agg {
                w.write_record([kind, "", "", "", "", &a.mcd_db.to_string(), &opt(a.f0_mae_hz)])?;
            }
        }
        let body = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        write_with_hash(path, Some(&self.config_hash), body)
    }
}

/// DTW mel-cepstral distortion and F0 error of `converted` against `reference`.
/// The F0 comparison reuses the cepstral alignment.
pub fn pair_metrics(converted: &Waveform, reference: &Waveform, cfg: &FeatureConfig) -> Result<(f64, Option<f64>)> {
    let (ca, cb) = (compute_mcep(converted, cfg)?, compute_mcep(reference, cfg)?);
    let path = dtw_align(&ca, &cb)?;
    let mcd = mcd_along(&ca, &cb, &path);
    let (fa, fb) = (extract_f0(converted, cfg)?, extract_f0(reference, cfg)?);
    let f0 = match f0_mae(&fa, &fb, &path) {
        Ok(v) => Some(v),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok((mcd, f0))
}
