use super::FeatureConfig;
use crate::audio::{Waveform, SAMPLE_RATE};
use crate::{Error, Result};

/// Per-frame fundamental frequency; unvoiced frames carry 0 Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct F0Track {
    f0_hz: Vec<f64>,
    voiced: Vec<bool>,
}

impl F0Track {
    /// Builds a track from raw values; a frame is voiced iff its F0 is positive.
    pub fn from_hz(f0_hz: Vec<f64>) -> Result<Self> {
        if f0_hz.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Shape("F0 values must be finite and non-negative".into()));
        }
        let voiced = f0_hz.iter().map(|&f| f > 0.0).collect();
        Ok(Self { f0_hz, voiced })
    }

    pub fn f0_hz(&self) -> &[f64] {
        &self.f0_hz
    }

    pub fn voiced(&self) -> &[bool] {
        &self.voiced
    }

    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.voiced.is_empty() {
            return 0.0;
        }
        self.voiced.iter().filter(|&&v| v).count() as f64 / self.voiced.len() as f64
    }

    pub fn median_voiced(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.f0_hz.iter().copied().filter(|&f| f > 0.0).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }
}

/// Normalized autocorrelation pitch tracker on the mel analysis frames.
///
/// The candidate lag is the shortest local maximum within 90% of the best
/// peak in the search band, refined by parabolic interpolation. Frames whose
/// peak falls below the voicing threshold are unvoiced.
pub fn extract_f0(w: &Waveform, cfg: &FeatureConfig) -> Result<F0Track> {
    let frames = cfg.frame_count(w.len()).unwrap_or(0);
    let x = w.samples();
    let sr = SAMPLE_RATE as f64;
    let win = cfg.win_length;
    let lag_min = (sr / cfg.f0_max).floor().max(2.0) as usize;
    let lag_max = ((sr / cfg.f0_min).ceil() as usize).min(win - 2);
    let mut f0 = Vec::with_capacity(frames);
    for t in 0..frames {
        let frame = &x[t * cfg.hop_length..t * cfg.hop_length + win];
        f0.push(frame_f0(frame, lag_min, lag_max, cfg.voicing_threshold, sr));
    }
    let f0 = f0
        .into_iter()
        .map(|f| match f {
            Some(hz) if hz >= cfg.f0_min && hz <= cfg.f0_max => hz,
            _ => 0.0,
        })
        .collect();
    F0Track::from_hz(f0)
}

fn frame_f0(frame: &[f64], lag_min: usize, lag_max: usize, threshold: f64, sr: f64) -> Option<f64> {
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy < 1e-10 {
        return None;
    }
    let n = x.len();
    // prefix sums of squares for the overlapping-segment energies
    let mut sq = vec![0.0; n + 1];
    for i in 0..n {
        sq[i + 1] = sq[i] + x[i] * x[i];
    }
    let lo = lag_min - 1;
    let hi = lag_max + 1;
    let mut r = vec![0.0; hi + 1];
    for lag in lo..=hi {
        let m = n - lag;
        let num: f64 = x[..m].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum();
        let e0 = sq[m];
        let e1 = sq[n] - sq[lag];
        let den = (e0 * e1).sqrt();
        r[lag] = if den > 0.0 { num / den } else { 0.0 };
    }
    let peaks: Vec<usize> = (lag_min..=lag_max)
        .filter(|&l| r[l] > r[l - 1] && r[l] >= r[l + 1])
        .collect();
    let best = peaks.iter().map(|&l| r[l]).fold(f64::NEG_INFINITY, f64::max);
    if !(best >= threshold) {
        return None;
    }
    let lag = *peaks.iter().find(|&&l| r[l] >= 0.9 * best)?;
    let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Some(sr / (lag as f64 + shift))
}
