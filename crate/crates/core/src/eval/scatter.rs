use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::parse_bool;
use super::table_io::{read_with_hash, reader, write_with_hash};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub id: String,
    pub group: String,
    pub converted: bool,
    pub x: f64,
    pub y: f64,
}

/// 2-D projected embeddings, one row per input embedding.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingScatter {
    rows: Vec<ScatterRow>,
    config_hash: Option<String>,
}

impl EmbeddingScatter {
    pub fn new(rows: Vec<ScatterRow>, config_hash: Option<String>) -> Self {
        Self { rows, config_hash }
    }

    pub fn rows(&self) -> &[ScatterRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn config_hash(&self) -> Option<&str> {
        self.config_hash.as_deref()
    }

    /// CSV with columns `id,group,converted,x,y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(["id", "group", "converted", "x", "y"])?;
        }
        let body = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        write_with_hash(path, self.config_hash(), body)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (hash, text) = read_with_hash(path)?;
        let mut rows = Vec::new();
        for rec in reader(&text).records() {
            let rec = rec?;
            let bad = || Error::Shape(format!("{}: malformed scatter row {:?}", path.display(), rec));
            if rec.len() != 5 {
                return Err(bad());
            }
            rows.push(ScatterRow {
                id: rec[0].to_owned(),
                group: rec[1].to_owned(),
                converted: parse_bool(&rec[2]).ok_or_else(bad)?,
                x: rec[3].trim().parse().map_err(|_| bad())?,
                y: rec[4].trim().parse().map_err(|_| bad())?,
            });
        }
        Ok(Self::new(rows, hash))
    }
}
