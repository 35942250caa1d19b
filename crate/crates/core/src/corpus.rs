//! Speaker/utterance catalog, splits and the synthetic toy-speaker generator.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{Waveform, SAMPLE_RATE};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Gender::F),
            "m" | "male" => Ok(Gender::M),
            other => Err(Error::Config(format!("unknown gender tag {other:?}"))),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::F => "F",
            Gender::M => "M",
        })
    }
}

/// Source-to-target gender combination of a conversion pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GenderPair {
    F2F,
    M2M,
    F2M,
    M2F,
}

impl GenderPair {
    pub fn of(source: Gender, target: Gender) -> Self {
        match (source, target) {
            (Gender::F, Gender::F) => GenderPair::F2F,
            (Gender::M, Gender::M) => GenderPair::M2M,
            (Gender::F, Gender::M) => GenderPair::F2M,
            (Gender::M, Gender::F) => GenderPair::M2F,
        }
    }

    pub fn is_inter(self) -> bool {
        matches!(self, GenderPair::F2M | GenderPair::M2F)
    }
}

impl FromStr for GenderPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F2F" => Ok(GenderPair::F2F),
            "M2M" => Ok(GenderPair::M2M),
            "F2M" => Ok(GenderPair::F2M),
            "M2F" => Ok(GenderPair::M2F),
            other => Err(Error::Config(format!("unknown gender pair tag {other:?}"))),
        }
    }
}

impl fmt::Display for GenderPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Speaker {
    pub id: String,
    pub gender: Option<Gender>,
    pub utterances: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

/// Lexicographically ordered speakers with optional train/eval assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    root: PathBuf,
    speakers: Vec<Speaker>,
    train: Option<BTreeSet<String>>,
    heldout_per_speaker: usize,
}

impl Corpus {
    pub fn new(root: impl Into<PathBuf>, mut speakers: Vec<Speaker>) -> Result<Self> {
        speakers.sort_by(|a, b| a.id.cmp(&b.id));
        if speakers.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::Config("duplicate speaker id".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &mut speakers {
            s.utterances.sort();
            if let Some(dup) = s.utterances.iter().find(|u| !seen.insert((*u).clone())) {
                return Err(Error::Config(format!("utterance {} listed twice", dup.display())));
            }
        }
        Ok(Self {
            root: root.into(),
            speakers,
            train: None,
            heldout_per_speaker: 0,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn speakers(&self) -> &[Speaker] {
        &self.speakers
    }

    pub fn speaker(&self, id: &str) -> Option<&Speaker> {
        self.speakers.iter().find(|s| s.id == id)
    }

    pub fn n_utterances(&self) -> usize {
        self.speakers.iter().map(|s| s.utterances.len()).sum()
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        let train = self.train.as_ref()?;
        self.speaker(id)?;
        Some(if train.contains(id) { Split::Train } else { Split::Eval })
    }

    /// Training speakers in corpus order; every speaker when no split was made.
    pub fn training_speakers(&self) -> Vec<&Speaker> {
        self.speakers
            .iter()
            .filter(|s| self.train.as_ref().is_none_or(|t| t.contains(&s.id)))
            .collect()
    }

    /// Zero-shot evaluation speakers (empty when no split was made).
    pub fn eval_speakers(&self) -> Vec<&Speaker> {
        match &self.train {
            Some(t) => self.speakers.iter().filter(|s| !t.contains(&s.id)).collect(),
            None => Vec::new(),
        }
    }

    /// Reserves the last `per_speaker` utterances of every training speaker.
    pub fn with_utterance_holdout(mut self, per_speaker: usize) -> Result<Self> {
        if let Some(s) = self.training_speakers().into_iter().find(|s| s.utterances.len() <= per_speaker) {
            return Err(Error::InsufficientData(format!(
                "speaker {} has {} utterances, cannot hold out {per_speaker}",
                s.id,
                s.utterances.len()
            )));
        }
        self.heldout_per_speaker = per_speaker;
        Ok(self)
    }

    pub fn train_utterances<'a>(&self, s: &'a Speaker) -> &'a [PathBuf] {
        &s.utterances[..s.utterances.len().saturating_sub(self.heldout_per_speaker)]
    }

    pub fn heldout_utterances<'a>(&self, s: &'a Speaker) -> &'a [PathBuf] {
        &s.utterances[s.utterances.len().saturating_sub(self.heldout_per_speaker)..]
    }

    /// Fails if any of `speaker_ids` was used for training.
    pub fn assert_zero_shot<'a>(&self, speaker_ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let Some(train) = &self.train else {
            return Err(Error::State("corpus has no train/eval split".into()));
        };
        for id in speaker_ids {
            if train.contains(id) {
                return Err(Error::State(format!("speaker {id} is a training speaker")));
            }
        }
        Ok(())
    }

    /// Source/target pair with its gender tag when metadata is available.
    pub fn pair(&self, source: &str, target: &str) -> Result<ConversionPair> {
        let find = |id: &str| self.speaker(id).ok_or_else(|| Error::Config(format!("unknown speaker {id}")));
        let (s, t) = (find(source)?, find(target)?);
        Ok(ConversionPair {
            source_speaker: s.id.clone(),
            target_speaker: t.id.clone(),
            tag: s.gender.zip(t.gender).map(|(a, b)| GenderPair::of(a, b)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionPair {
    pub source_speaker: String,
    pub target_speaker: String,
    pub tag: Option<GenderPair>,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Catalogs `root/<speaker_id>/*.wav` with an optional one-line `meta` gender file.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<Corpus> {
    let root = root.as_ref();
    let mut speakers = Vec::new();
    for dir in read_dir_sorted(root)?.into_iter().filter(|p| p.is_dir()) {
        let wavs: Vec<PathBuf> = read_dir_sorted(&dir)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
            .collect();
        if wavs.is_empty() {
            continue;
        }
        for w in &wavs {
            hound::WavReader::open(w).map_err(|e| Error::Config(format!("{}: unreadable wav: {e}", w.display())))?;
        }
        let meta = dir.join("meta");
        let gender = if meta.is_file() {
            let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
            let line = text.lines().next().unwrap_or("").trim();
            Some(line.parse::<Gender>().map_err(|e| Error::Config(format!("{}: {e}", meta.display())))?)
        } else {
            None
        };
        let id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        speakers.push(Speaker {
            id,
            gender,
            utterances: wavs,
        });
    }
    if speakers.is_empty() {
        return Err(Error::InsufficientData(format!("{}: no speaker directories with wav files", root.display())));
    }
    Corpus::new(root, speakers)
}

/// Seeded random choice of `n_train_speakers`; the rest become zero-shot speakers.
pub fn make_splits(corpus: Corpus, n_train_speakers: usize, seed: u64) -> Result<Corpus> {
    let total = corpus.speakers.len();
    if n_train_speakers == 0 || n_train_speakers >= total {
        return Err(Error::Config(format!(
            "need 1..{} training speakers to leave an evaluation set, got {n_train_speakers}",
            total.saturating_sub(1)
        )));
    }
    let mut ids: Vec<String> = corpus.speakers.iter().map(|s| s.id.clone()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids.truncate(n_train_speakers);
    Ok(Corpus {
        train: Some(ids.into_iter().collect()),
        ..corpus
    })
}

/// Parameters of one synthetic speaker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyVoice {
    pub f0_hz: f64,
    /// Harmonic `k` has amplitude `k^-tilt`.
    pub tilt: f64,
    pub vibrato_hz: f64,
}

const TOY_F0: [f64; 4] = [110.0, 150.0, 200.0, 260.0];
const TOY_TILT: [f64; 2] = [1.0, 2.0];
const TOY_VIBRATO: [f64; 2] = [4.5, 6.0];
const VIBRATO_DEPTH: f64 = 0.02;
const UTTERANCE_SECONDS: f64 = 2.0;
const VOWELS: [(f64, f64); 6] = [
    (730.0, 1090.0),
    (270.0, 2290.0),
    (300.0, 870.0),
    (530.0, 1840.0),
    (660.0, 1720.0),
    (570.0, 840.0),
];

/// Number of distinct synthetic voices.
pub const TOY_SLOTS: usize = TOY_F0.len() * TOY_TILT.len() * TOY_VIBRATO.len();

pub fn toy_voice(index: usize) -> Result<ToyVoice> {
    if index >= TOY_SLOTS {
        return Err(Error::Config(format!("only {TOY_SLOTS} synthetic voices are available, asked for #{index}")));
    }
    Ok(ToyVoice {
        f0_hz: TOY_F0[index % 4],
        tilt: TOY_TILT[(index / 4) % 2],
        vibrato_hz: TOY_VIBRATO[(index / 8) % 2],
    })
}

pub fn toy_speaker_id(index: usize) -> String {
    format!("spk{index:02}")
}

fn formant_gain(freq: f64, f1: f64, f2: f64) -> f64 {
    let peak = |c: f64, bw: f64| (-(freq - c).powi(2) / (2.0 * bw * bw)).exp();
    1.0 + 4.0 * peak(f1, 90.0) + 2.5 * peak(f2, 140.0)
}

/// One 2-second harmonic-plus-noise utterance: a train of vowel-like syllables
/// with random amplitude contours over the voice's pitch, tilt and vibrato.
pub fn synth_utterance(voice: ToyVoice, rng: &mut impl Rng) -> Waveform {
    let sr = SAMPLE_RATE as f64;
    let n = (UTTERANCE_SECONDS * sr) as usize;
    let mut out = vec![0.0; n];
    let vib_phase = rng.random_range(0.0..TAU);
    let mut t0 = rng.random_range(0.02..0.12);
    while t0 < UTTERANCE_SECONDS - 0.15 {
        let dur = rng.random_range(0.18f64..0.36).min(UTTERANCE_SECONDS - 0.02 - t0);
        let (f1, f2) = VOWELS[rng.random_range(0..VOWELS.len())];
        let peak = rng.random_range(0.45..1.0);
        let bend = rng.random_range(-0.015..0.015);
        let start = (t0 * sr) as usize;
        let len = (dur * sr) as usize;
        let base = voice.f0_hz;
        let n_harm = ((7600.0 / (base * (1.0 + VIBRATO_DEPTH))) as usize).max(1);
        let amps: Vec<f64> = (1..=n_harm)
            .map(|k| (k as f64).powf(-voice.tilt) * formant_gain(k as f64 * base, f1, f2))
            .collect();
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut phase = 0.0f64;
        for i in 0..len {
            let t = (start + i) as f64 / sr;
            let rel = i as f64 / len as f64;
            let f0 = base * (1.0 + bend * (rel - 0.5)) * (1.0 + VIBRATO_DEPTH * (TAU * voice.vibrato_hz * t + vib_phase).sin());
            phase = (phase + TAU * f0 / sr) % TAU;
            let env = peak * (std::f64::consts::PI * rel).sin().powf(0.6);
            let mut s = 0.0;
            for (k, a) in amps.iter().enumerate() {
                s += a * ((k + 1) as f64 * phase).sin();
            }
            out[start + i] += 0.5 * env * s / norm;
        }
        t0 += dur + rng.random_range(0.03..0.1);
    }
    for v in out.iter_mut() {
        *v += 0.003 * (rng.random::<f64>() * 2.0 - 1.0);
    }
    Waveform::new(out).expect("synthetic samples are finite")
}

/// Writes `n_speakers * utts_per_speaker` synthetic utterances under `out_dir`
/// and returns the loaded catalog. Identical seeds give byte-identical files.
pub fn synth_toy_corpus(n_speakers: usize, utts_per_speaker: usize, seed: u64, out_dir: impl AsRef<Path>) -> Result<Corpus> {
    let out_dir = out_dir.as_ref();
    if n_speakers == 0 || utts_per_speaker == 0 {
        return Err(Error::Config("toy corpus needs at least one speaker and one utterance".into()));
    }
    let voices = (0..n_speakers).map(toy_voice).collect::<Result<Vec<_>>>()?;
    for (k, voice) in voices.into_iter().enumerate() {
        let dir = out_dir.join(toy_speaker_id(k));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let gender = if voice.f0_hz >= 200.0 { Gender::F } else { Gender::M };
        let meta = dir.join("meta");
        fs::write(&meta, format!("{gender}\n")).map_err(|e| Error::io(&meta, e))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        for u in 0..utts_per_speaker {
            synth_utterance(voice, &mut rng).write_wav(dir.join(format!("utt{u:03}.wav")))?;
        }
    }
    load_corpus(out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_cover_parameter_grid() {
        assert_eq!(TOY_SLOTS, 16);
        let v = toy_voice(13).unwrap();
        assert_eq!((v.f0_hz, v.tilt, v.vibrato_hz), (150.0, 2.0, 6.0));
        assert!(toy_voice(16).is_err());
    }

    #[test]
    fn gender_pairs() {
        assert_eq!(GenderPair::of(Gender::F, Gender::M), GenderPair::F2M);
        assert!(GenderPair::M2F.is_inter());
        assert!(!GenderPair::M2M.is_inter());
        assert_eq!("f2f".parse::<GenderPair>().unwrap(), GenderPair::F2F);
        assert_eq!(GenderPair::M2F.to_string(), "M2F");
    }
}
