use std::fs;
use std::path::Path;

use crate::{Error, Result};

const HASH_PREFIX: &str = "# config_hash:";

/// Writes CSV `body` preceded by an optional config-hash comment line.
pub(crate) fn write_with_hash(path: &Path, hash: Option<&str>, body: Vec<u8>) -> Result<()> {
    let mut out = Vec::with_capacity(body.len() + 80);
    if let Some(h) = hash {
        out.extend_from_slice(format!("{HASH_PREFIX} {h}\n").as_bytes());
    }
    out.extend(body);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Splits a file into its config-hash comment (if any) and the CSV text.
pub(crate) fn read_with_hash(path: &Path) -> Result<(Option<String>, String)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let hash = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix(HASH_PREFIX))
        .map(|h| h.trim().to_owned());
    Ok((hash, text))
}

pub(crate) fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}
