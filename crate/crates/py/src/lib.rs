//! Python bindings. The plain functions are usable from Rust; the
//! `#[pyfunction]` wrappers convert errors into `ValueError`.

use std::path::Path;

use dgcvc::audio::Waveform;
use dgcvc::corpus::synth_toy_corpus;
use dgcvc::eval::{dtw_mcd, similarity_stats, EmbeddingTable};
use dgcvc::features::{compute_mel, mel_to_waveform, FeatureConfig, McepSequence};
use dgcvc::training::load_vc;
use dgcvc::Result;
use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(dgcvc::Error::Shape("ragged rows".into()));
    }
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| dgcvc::Error::Shape(e.to_string()))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// DTW mel-cepstral distortion between two cepstral sequences (frames x coefficients).
pub fn mcd(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    dtw_mcd(&McepSequence::new(to_array(a)?)?, &McepSequence::new(to_array(b)?)?)
}

/// Log-mel frames of a WAV file under the default analysis settings.
pub fn mel_of_wav(path: &Path) -> Result<Vec<Vec<f64>>> {
    let m = compute_mel(&Waveform::read_wav(path)?, &FeatureConfig::default())?;
    Ok(to_rows(m.frames()))
}

/// Converts `src` to the voice of `reference` and writes a WAV; returns the frame count.
pub fn convert_files(ckpt: &Path, src: &Path, reference: &Path, out: &Path) -> Result<usize> {
    let loaded = load_vc(ckpt)?;
    let sys = &loaded.system;
    let load = |p: &Path| compute_mel(&Waveform::read_wav(p)?, &sys.features);
    let converted = sys.convert(&load(src)?, &load(reference)?)?.trimmed()?;
    mel_to_waveform(&converted, &sys.features, sys.features.griffin_lim_iters)?.write_wav(out)?;
    Ok(converted.n_frames())
}

/// Per-group `(group, intra, inter)` distances of an embedding CSV.
pub fn group_distances(embeddings_csv: &Path) -> Result<Vec<(String, f64, Option<f64>)>> {
    let stats = similarity_stats(&EmbeddingTable::read_csv(embeddings_csv)?);
    Ok(stats.groups.into_iter().map(|g| (g.group, g.intra, g.inter)).collect())
}

fn py_err(e: dgcvc::Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.kind()))
}

#[pyfunction]
#[pyo3(name = "dtw_mcd")]
fn py_dtw_mcd(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    mcd(&a, &b).map_err(py_err)
}

#[pyfunction]
fn mel_spectrogram(path: &str) -> PyResult<Vec<Vec<f64>>> {
    mel_of_wav(Path::new(path)).map_err(py_err)
}

#[pyfunction]
#[pyo3(name = "synth_toy_corpus")]
fn py_synth_toy_corpus(out_dir: &str, n_speakers: usize, utts_per_speaker: usize, seed: u64) -> PyResult<Vec<String>> {
    let c = synth_toy_corpus(n_speakers, utts_per_speaker, seed, out_dir).map_err(py_err)?;
    Ok(c.speakers().iter().map(|s| s.id.clone()).collect())
}

#[pyfunction]
fn convert(ckpt: &str, src: &str, reference: &str, out: &str) -> PyResult<usize> {
    convert_files(Path::new(ckpt), Path::new(src), Path::new(reference), Path::new(out)).map_err(py_err)
}

#[pyfunction]
fn similarity(embeddings_csv: &str) -> PyResult<Vec<(String, f64, Option<f64>)>> {
    group_distances(Path::new(embeddings_csv)).map_err(py_err)
}

#[pymodule]
fn dgcvc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(py_dtw_mcd, m)?)?;
    m.add_function(wrap_pyfunction!(mel_spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(py_synth_toy_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(convert, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    Ok(())
}
