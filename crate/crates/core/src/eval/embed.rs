use std::path::Path;

use super::table_io::{read_with_hash, reader, write_with_hash};
use crate::asv::AsvModel;
use crate::features::{FeatureConfig, MelSpectrogram};
use crate::nn::Real;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub id: String,
    pub group: String,
    pub converted: bool,
    pub vector: Vec<f64>,
}

/// Utterance embeddings tagged with a group label and a converted/ground-truth flag.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingTable {
    rows: Vec<EmbeddingRow>,
    config_hash: Option<String>,
}

impl EmbeddingTable {
    pub fn new(rows: Vec<EmbeddingRow>, config_hash: Option<String>) -> Result<Self> {
        if let Some(first) = rows.first() {
            let dim = first.vector.len();
            if let Some(bad) = rows.iter().find(|r| r.vector.len() != dim) {
                return Err(Error::Shape(format!(
                    "embedding {} has dimension {}, expected {dim}",
                    bad.id,
                    bad.vector.len()
                )));
            }
        }
        Ok(Self { rows, config_hash })
    }

    pub fn rows(&self) -> &[EmbeddingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.vector.len())
    }

    pub fn config_hash(&self) -> Option<&str> {
        self.config_hash.as_deref()
    }

    /// CSV with columns `id,group,converted,e0,e1,...`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_owned(), "group".into(), "converted".into()];
        header.extend((0..self.dim()).map(|i| format!("e{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.id.clone(), r.group.clone(), r.converted.to_string()];
            rec.extend(r.vector.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let body = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        write_with_hash(path, self.config_hash(), body)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (hash, text) = read_with_hash(path)?;
        let mut rows = Vec::new();
        for rec in reader(&text).records() {
            let rec = rec?;
            if rec.len() < 3 {
                return Err(Error::Shape(format!("{}: embedding row with {} fields", path.display(), rec.len())));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Shape(format!("{}: bad number {s:?}", path.display())))
            };
            rows.push(EmbeddingRow {
                id: rec[0].to_owned(),
                group: rec[1].to_owned(),
                converted: parse_bool(&rec[2])
                    .ok_or_else(|| Error::Shape(format!("{}: bad flag {:?}", path.display(), &rec[2])))?,
                vector: rec.iter().skip(3).map(parse).collect::<Result<_>>()?,
            });
        }
        Self::new(rows, hash)
    }
}

pub(crate) fn parse_bool(s: &str) -> Option<bool> {
    match s.trim() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

/// One utterance to embed.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingSource<'a> {
    pub id: &'a str,
    pub group: &'a str,
    pub converted: bool,
    pub mel: &'a MelSpectrogram,
}

/// D-vector of every utterance, in input order.
pub fn export_embeddings<F: Real>(
    items: &[EmbeddingSource<'_>],
    asv: Option<&AsvModel<F>>,
    features: &FeatureConfig,
    config_hash: Option<String>,
) -> Result<EmbeddingTable> {
    let asv = asv.ok_or_else(|| Error::MissingModel("embedding export needs a trained ASV model".into()))?;
    let rows = items
        .iter()
        .map(|it| {
            Ok(EmbeddingRow {
                id: it.id.to_owned(),
                group: it.group.to_owned(),
                converted: it.converted,
                vector: asv.dvector(it.mel, features)?.into_inner().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingTable::new(rows, config_hash)
}
