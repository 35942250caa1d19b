//! Speaker-verification network trained with the GE2E softmax objective.

use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{module_checksum, Checkpoint, ConfigStamp};
use crate::data::{normalize_mel, stack, window, SpeakerMels};
use crate::features::{FeatureConfig, MelSpectrogram, WindowMode, N_MELS};
use crate::nn::{clip_grad_norm, join, Adam, AdamConfig, Linear, LinearCache, Lstm, LstmCache, Module, Param, Real};
use crate::{Error, Result};

const W_MIN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsvConfig {
    pub layers: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Frames per inference window for D-vectors.
    pub window: usize,
}

impl Default for AsvConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 256,
            embed_dim: 256,
            window: 160,
        }
    }
}

impl AsvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.embed_dim == 0 || self.window < 2 {
            return Err(Error::Config(format!("invalid ASV architecture {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsvTrainConfig {
    pub speakers_per_batch: usize,
    pub utterances_per_speaker: usize,
    pub crop_frames: usize,
    pub steps: u64,
    pub lr: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl Default for AsvTrainConfig {
    fn default() -> Self {
        Self {
            speakers_per_batch: 4,
            utterances_per_speaker: 4,
            crop_frames: 80,
            steps: 500,
            lr: 1e-3,
            grad_clip: 3.0,
            seed: 0,
            checkpoint_every: 100,
        }
    }
}

impl AsvTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speakers_per_batch < 2 || self.utterances_per_speaker < 2 {
            return Err(Error::Config("GE2E batches need at least 2 speakers with 2 utterances each".into()));
        }
        if self.crop_frames == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("crop_frames and lr must be positive".into()));
        }
        Ok(())
    }
}

/// Frame-level speaker features, one row per input frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DSequence {
    frames: Array2<f64>,
}

impl DSequence {
    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// Unit-norm utterance-level speaker embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct DVector {
    embedding: Array1<f64>,
}

impl DVector {
    pub fn from_unnormalized(v: Array1<f64>) -> Result<Self> {
        let n = v.dot(&v).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Undefined("cannot normalize a zero or non-finite embedding".into()));
        }
        Ok(Self { embedding: v / n })
    }

    pub fn embedding(&self) -> &Array1<f64> {
        &self.embedding
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.embedding
    }

    pub fn cosine(&self, other: &DVector) -> f64 {
        self.embedding.dot(&other.embedding)
    }
}

/// Stacked LSTMs with a per-frame projection and the GE2E similarity scale/offset.
#[derive(Clone, Debug)]
pub struct AsvModel<F = f32> {
    cfg: AsvConfig,
    layers: Vec<Lstm<F>>,
    proj: Linear<F>,
    pub w: Param<F>,
    pub b: Param<F>,
    frozen: bool,
    origin: Option<String>,
}

pub struct AsvCache<F> {
    layers: Vec<LstmCache<F>>,
    proj: LinearCache<F>,
    batch: usize,
    frames: usize,
}

impl<F: Real> AsvModel<F> {
    pub fn new(cfg: AsvConfig, rng: &mut impl rand::Rng) -> Result<Self> {
        cfg.validate()?;
        let layers = (0..cfg.layers)
            .map(|i| Lstm::new(if i == 0 { N_MELS } else { cfg.hidden }, 0, cfg.hidden, false, rng))
            .collect();
        Ok(Self {
            proj: Linear::new(cfg.hidden, cfg.embed_dim, true, rng),
            layers,
            w: Param::new(Array2::from_elem((1, 1), F::of(10.0))),
            b: Param::new(Array2::from_elem((1, 1), F::of(-5.0))),
            cfg,
            frozen: false,
            origin: None,
        })
    }

    pub fn config(&self) -> &AsvConfig {
        &self.cfg
    }

    pub fn embed_dim(&self) -> usize {
        self.cfg.embed_dim
    }

    /// Marks the model frozen and drops any accumulated gradients.
    pub fn freeze(&mut self) {
        self.zero_grad();
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn checksum(&self) -> String {
        module_checksum(self)
    }

    /// Config hash of the run that trained this model, when known.
    pub fn origin(&self) -> Option<&str> {
        self.origin.as_deref()
    }

    pub fn set_origin(&mut self, config_hash: Option<String>) {
        self.origin = config_hash;
    }

    pub fn scale(&self) -> f64 {
        self.w.value[[0, 0]].f64()
    }

    pub fn offset(&self) -> f64 {
        self.b.value[[0, 0]].f64()
    }

    fn recurrent(&self, x: &Array3<F>) -> (Array3<F>, Vec<LstmCache<F>>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(&h, None);
            caches.push(cache);
            h = out;
        }
        (h, caches)
    }

    /// Projected per-frame outputs `[B, T, embed]` for a normalized batch `[B, T, 80]`.
    pub fn dsequence_batch(&self, x: &Array3<F>) -> Array3<F> {
        let (b, t, _) = x.dim();
        let (h, _) = self.recurrent(x);
        let flat = h.into_shape_with_order((b * t, self.cfg.hidden)).expect("contiguous");
        self.proj
            .apply(&flat)
            .into_shape_with_order((b, t, self.cfg.embed_dim))
            .expect("contiguous")
    }

    /// Projection of the last frame, `[B, embed]`, with what backward needs.
    pub fn forward_last(&self, x: &Array3<F>) -> (Array2<F>, AsvCache<F>) {
        let (b, t, _) = x.dim();
        let (h, caches) = self.recurrent(x);
        let last = h.index_axis(Axis(1), t - 1).to_owned();
        let (y, proj) = self.proj.forward(&last);
        (
            y,
            AsvCache {
                layers: caches,
                proj,
                batch: b,
                frames: t,
            },
        )
    }

    pub fn backward_last(&mut self, cache: &AsvCache<F>, dy: &Array2<F>) {
        let dlast = self.proj.backward(&cache.proj, dy);
        let mut dh = Array3::zeros((cache.batch, cache.frames, self.cfg.hidden));
        dh.index_axis_mut(Axis(1), cache.frames - 1).assign(&dlast);
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers).rev() {
            dh = layer.backward(c, &dh).0;
        }
    }

    fn normalized_input(mel: &MelSpectrogram, cfg: &FeatureConfig) -> Result<Array2<f64>> {
        if mel.n_frames() == 0 {
            return Err(Error::TooShort {
                what: "mel spectrogram frames",
                len: 0,
                min: 1,
            });
        }
        Ok(normalize_mel(mel.frames(), cfg))
    }

    /// Per-frame speaker features of a whole utterance.
    pub fn dsequence(&self, mel: &MelSpectrogram, cfg: &FeatureConfig) -> Result<DSequence> {
        let x = Self::normalized_input(mel, cfg)?;
        let out = self.dsequence_batch(&stack::<F>(&[x]));
        Ok(DSequence {
            frames: out.index_axis(Axis(0), 0).mapv(|v| v.f64()),
        })
    }

    /// Utterance embedding: the normalized final projection of each window,
    /// averaged over half-overlapping windows for long inputs and renormalized.
    pub fn dvector(&self, mel: &MelSpectrogram, cfg: &FeatureConfig) -> Result<DVector> {
        let x = Self::normalized_input(mel, cfg)?;
        let t = x.nrows();
        let win = self.cfg.window;
        let starts = window_starts(t, win);
        let len = t.min(win);
        let crops: Vec<Array2<f64>> = starts.iter().map(|&s| x.slice(s![s..s + len, ..]).to_owned()).collect();
        let (y, _) = self.forward_last(&stack::<F>(&crops));
        let mut acc = Array1::<f64>::zeros(self.cfg.embed_dim);
        for row in y.rows() {
            let v = row.mapv(|v| v.f64());
            acc += &(&v / v.dot(&v).sqrt().max(1e-12));
        }
        DVector::from_unnormalized(acc)
    }

    /// Normalized embeddings of a batch of equally long normalized windows.
    pub fn dvector_batch(&self, x: &Array3<F>) -> Array2<f64> {
        let (y, _) = self.forward_last(x);
        let mut y = y.mapv(|v| v.f64());
        for mut row in y.rows_mut() {
            let n = row.dot(&row).sqrt().max(1e-12);
            row /= n;
        }
        y
    }

    pub fn to_checkpoint(&self, prefix: &str, ck: &mut Checkpoint) {
        ck.insert_module(prefix, self);
    }

    /// Rebuilds a model from the tensors stored under `prefix` with architecture `cfg`.
    pub fn from_checkpoint(ck: &Checkpoint, prefix: &str, cfg: AsvConfig) -> Result<Self> {
        let mut model = Self::new(cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
        ck.load_module(prefix, &mut model)?;
        Ok(model)
    }
}

/// Window starts covering `t` frames with half-overlapping windows of `win`.
pub fn window_starts(t: usize, win: usize) -> Vec<usize> {
    if t <= win {
        return vec![0];
    }
    let hop = (win / 2).max(1);
    let mut starts: Vec<usize> = (0..).map(|k| k * hop).take_while(|s| s + win <= t).collect();
    if starts.last().is_some_and(|&s| s + win < t) {
        starts.push(t - win);
    }
    starts
}

impl<F: Real> Module<F> for AsvModel<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("lstm{i}")), f);
        }
        self.proj.visit(&join(prefix, "proj"), f);
        f(&join(prefix, "w"), &self.w);
        f(&join(prefix, "b"), &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("lstm{i}")), f);
        }
        self.proj.visit_mut(&join(prefix, "proj"), f);
        f(&join(prefix, "w"), &mut self.w);
        f(&join(prefix, "b"), &mut self.b);
    }
}

/// GE2E loss value with gradients for the embeddings, scale and offset.
#[derive(Clone, Debug)]
pub struct Ge2eLoss {
    pub loss: f64,
    pub d_embeddings: Array3<f64>,
    pub d_w: f64,
    pub d_b: f64,
}

fn check_batch(emb: &Array3<f64>, w: f64) -> Result<()> {
    let (n, m, _) = emb.dim();
    if n < 2 || m < 2 {
        return Err(Error::InsufficientData(format!(
            "GE2E needs at least 2 speakers with 2 utterances each, got {n}x{m}"
        )));
    }
    if !(w > 0.0) {
        return Err(Error::Config(format!("similarity scale must be positive, got {w}")));
    }
    Ok(())
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt().max(1e-12)
}

/// Centroid of speaker `j`, leaving out utterance `skip` when given.
fn centroid(emb: &Array3<f64>, j: usize, skip: Option<usize>) -> Array1<f64> {
    let m = emb.dim().1;
    let mut c = Array1::zeros(emb.dim().2);
    for i in (0..m).filter(|&i| Some(i) != skip) {
        c += &emb.slice(s![j, i, ..]);
    }
    c / (m - skip.map_or(0, |_| 1)) as f64
}

/// Similarity matrix `S[j, i, k] = w cos(e_ji, c_k) + b`, where `c_j` excludes `e_ji`.
pub fn ge2e_similarity(emb: &Array3<f64>, w: f64, b: f64) -> Result<Array3<f64>> {
    check_batch(emb, w)?;
    let (n, m, _) = emb.dim();
    let full: Vec<Array1<f64>> = (0..n).map(|k| centroid(emb, k, None)).collect();
    let mut sim = Array3::zeros((n, m, n));
    for j in 0..n {
        for i in 0..m {
            let e = emb.slice(s![j, i, ..]).to_owned();
            for k in 0..n {
                let c = if k == j { centroid(emb, j, Some(i)) } else { full[k].clone() };
                sim[[j, i, k]] = w * e.dot(&c) / (norm(&e) * norm(&c)) + b;
            }
        }
    }
    Ok(sim)
}

/// Softmax GE2E loss summed over all utterances of an `[N, M, D]` batch.
pub fn ge2e_loss(emb: &Array3<f64>, w: f64, b: f64) -> Result<Ge2eLoss> {
    check_batch(emb, w)?;
    let (n, m, d) = emb.dim();
    let full: Vec<Array1<f64>> = (0..n).map(|k| centroid(emb, k, None)).collect();
    let mut d_emb = Array3::<f64>::zeros((n, m, d));
    let mut d_full = vec![Array1::<f64>::zeros(d); n];
    let (mut loss, mut d_w, mut d_b) = (0.0, 0.0, 0.0);
    for j in 0..n {
        for i in 0..m {
            let e = emb.slice(s![j, i, ..]).to_owned();
            let ne = norm(&e);
            let cents: Vec<Array1<f64>> = (0..n)
                .map(|k| if k == j { centroid(emb, j, Some(i)) } else { full[k].clone() })
                .collect();
            let cos: Vec<f64> = cents.iter().map(|c| e.dot(c) / (ne * norm(c))).collect();
            let logits: Vec<f64> = cos.iter().map(|c| w * c + b).collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
            loss += -logits[j] + mx + z.ln();
            for k in 0..n {
                let g = (logits[k] - mx).exp() / z - if k == j { 1.0 } else { 0.0 };
                d_w += g * cos[k];
                d_b += g;
                let c = &cents[k];
                let nc = norm(c);
                let de = c / (ne * nc) - &(&e * (cos[k] / (ne * ne)));
                let dc = &e / (ne * nc) - &(c * (cos[k] / (nc * nc)));
                let mut row = d_emb.slice_mut(s![j, i, ..]);
                row.scaled_add(w * g, &de);
                if k == j {
                    for other in (0..m).filter(|&o| o != i) {
                        d_emb.slice_mut(s![j, other, ..]).scaled_add(w * g / (m - 1) as f64, &dc);
                    }
                } else {
                    d_full[k].scaled_add(w * g, &dc);
                }
            }
        }
    }
    for (k, dc) in d_full.iter().enumerate() {
        for i in 0..m {
            d_emb.slice_mut(s![k, i, ..]).scaled_add(1.0 / m as f64, dc);
        }
    }
    Ok(Ge2eLoss {
        loss,
        d_embeddings: d_emb,
        d_w,
        d_b,
    })
}

/// Gradient through row-wise L2 normalization `e = x / |x|`.
pub fn normalize_backward(x: &Array2<f64>, de: &Array2<f64>) -> Array2<f64> {
    let mut dx = Array2::zeros(x.raw_dim());
    for ((xr, dr), mut out) in x.rows().into_iter().zip(de.rows()).zip(dx.rows_mut()) {
        let n = xr.dot(&xr).sqrt().max(1e-12);
        let e = &xr / n;
        let proj = e.dot(&dr);
        out.assign(&((&dr - &(&e * proj)) / n));
    }
    dx
}

/// GE2E optimization state over a fixed set of speakers.
pub struct AsvTrainer {
    pub model: AsvModel<f32>,
    adam: Adam<f32>,
    cfg: AsvTrainConfig,
    features: FeatureConfig,
    speakers: Vec<SpeakerMels>,
    step: u64,
}

impl AsvTrainer {
    pub fn new(model: AsvModel<f32>, speakers: Vec<SpeakerMels>, features: FeatureConfig, cfg: AsvTrainConfig) -> Result<Self> {
        if model.is_frozen() {
            return Err(Error::State("cannot train a frozen ASV model".into()));
        }
        cfg.validate()?;
        if speakers.len() < cfg.speakers_per_batch {
            return Err(Error::InsufficientData(format!(
                "ASV training needs {} speakers, corpus has {}",
                cfg.speakers_per_batch,
                speakers.len()
            )));
        }
        if let Some(s) = speakers.iter().find(|s| s.train.len() < cfg.utterances_per_speaker) {
            return Err(Error::InsufficientData(format!(
                "speaker {} has {} training utterances, need {}",
                s.id,
                s.train.len(),
                cfg.utterances_per_speaker
            )));
        }
        let adam = Adam::new(AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        });
        Ok(Self {
            model,
            adam,
            cfg,
            features,
            speakers,
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn embed_loss(&self, crops: Vec<Array2<f64>>, n: usize, m: usize) -> Result<(Ge2eLoss, Array2<f64>, AsvCache<f32>)> {
        let x = stack::<f32>(&crops);
        let (y, cache) = self.model.forward_last(&x);
        let raw = y.mapv(f64::from);
        let mut unit = raw.clone();
        for mut r in unit.rows_mut() {
            let nr = r.dot(&r).sqrt().max(1e-12);
            r /= nr;
        }
        let emb = unit.into_shape_with_order((n, m, self.model.embed_dim())).expect("contiguous");
        let out = ge2e_loss(&emb, self.model.scale(), self.model.offset())?;
        Ok((out, raw, cache))
    }

    /// One optimizer update on a freshly sampled batch; returns the batch loss.
    pub fn train_step(&mut self) -> Result<f64> {
        let (n, m) = (self.cfg.speakers_per_batch, self.cfg.utterances_per_speaker);
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(self.step + 1);
        let mut crops = Vec::with_capacity(n * m);
        for si in sample(&mut rng, self.speakers.len(), n).into_vec() {
            let spk = &self.speakers[si];
            for ui in sample(&mut rng, spk.train.len(), m).into_vec() {
                crops.push(window(&spk.train[ui], self.cfg.crop_frames, WindowMode::Train, &self.features, &mut rng)?.0);
            }
        }
        self.model.zero_grad();
        let (out, raw, cache) = self.embed_loss(crops, n, m)?;
        let d_unit = out.d_embeddings.into_shape_with_order((n * m, self.model.embed_dim())).expect("contiguous");
        let d_raw = normalize_backward(&raw, &d_unit).mapv(|v| v as f32);
        self.model.backward_last(&cache, &d_raw);
        self.model.w.grad[[0, 0]] += out.d_w as f32;
        self.model.b.grad[[0, 0]] += out.d_b as f32;
        clip_grad_norm(&mut self.model, self.cfg.grad_clip);
        self.adam.step(&mut self.model);
        self.model.w.value.mapv_inplace(|w| w.max(W_MIN as f32));
        self.step += 1;
        Ok(out.loss)
    }

    /// GE2E loss on the first held-out utterances of the first speakers, cropped from frame 0.
    pub fn heldout_loss(&self) -> Result<f64> {
        let n = self.cfg.speakers_per_batch;
        let m = self
            .speakers
            .iter()
            .take(n)
            .map(|s| s.heldout.len())
            .min()
            .unwrap_or(0)
            .min(self.cfg.utterances_per_speaker);
        if m < 2 {
            return Err(Error::InsufficientData("held-out GE2E loss needs 2 held-out utterances per speaker".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut crops = Vec::with_capacity(n * m);
        for spk in self.speakers.iter().take(n) {
            for mel in &spk.heldout[..m] {
                crops.push(window(mel, self.cfg.crop_frames, WindowMode::Eval, &self.features, &mut rng)?.0);
            }
        }
        Ok(self.embed_loss(crops, n, m)?.0.loss)
    }

    /// Parameters plus optimizer state, enough to resume bit-exactly.
    pub fn checkpoint(&self, stamp: &ConfigStamp) -> Checkpoint {
        let mut ck = Checkpoint::new("asv", self.step, &stamp.hash, stamp.config.clone());
        self.model.to_checkpoint("model", &mut ck);
        for (i, (m, v)) in self.adam.moments().iter().enumerate() {
            ck.insert(&format!("adam.m.{i}"), m.mapv(f64::from));
            ck.insert(&format!("adam.v.{i}"), v.mapv(f64::from));
        }
        ck.meta = serde_json::json!({
            "arch": self.model.config(),
            "adam_steps": self.adam.steps(),
            "speakers": self.speakers.iter().map(|s| &s.id).collect::<Vec<_>>(),
        });
        ck
    }

    /// Continues from a checkpoint written by [`AsvTrainer::checkpoint`].
    pub fn resume(ck: &Checkpoint, speakers: Vec<SpeakerMels>, features: FeatureConfig, cfg: AsvTrainConfig) -> Result<Self> {
        ck.expect_kind("asv")?;
        let arch = asv_arch(ck)?;
        let model = AsvModel::from_checkpoint(ck, "model", arch)?;
        let mut t = Self::new(model, speakers, features, cfg)?;
        let mut moments = Vec::new();
        for i in 0.. {
            match (ck.get(&format!("adam.m.{i}")), ck.get(&format!("adam.v.{i}"))) {
                (Some(m), Some(v)) => moments.push((m.mapv(|x| x as f32), v.mapv(|x| x as f32))),
                _ => break,
            }
        }
        let steps = ck.meta.get("adam_steps").and_then(|v| v.as_u64()).unwrap_or(0);
        t.adam = Adam::restore(t.adam.cfg, steps, moments);
        t.step = ck.step;
        Ok(t)
    }
}

/// Architecture recorded in an ASV checkpoint.
pub fn asv_arch(ck: &Checkpoint) -> Result<AsvConfig> {
    let v = ck
        .meta
        .get("arch")
        .ok_or_else(|| Error::Integrity("checkpoint lacks an ASV architecture record".into()))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Integrity(format!("bad ASV architecture record: {e}")))
}

/// Loads a trained ASV model from an `asv` checkpoint and freezes it.
/// A differing expected architecture is an integrity error.
pub fn load_frozen_asv(path: &Path, expected: Option<&AsvConfig>) -> Result<AsvModel<f32>> {
    let ck = Checkpoint::load(path)?;
    ck.expect_kind("asv")?;
    let arch = asv_arch(&ck)?;
    if let Some(e) = expected.filter(|e| **e != arch) {
        return Err(Error::Integrity(format!("ASV architecture mismatch: checkpoint {arch:?}, config {e:?}")));
    }
    let mut model = AsvModel::from_checkpoint(&ck, "model", arch)?;
    model.set_origin(Some(ck.config_hash.clone()));
    model.freeze();
    Ok(model)
}

#[derive(Debug)]
pub struct AsvTrainReport {
    pub model: AsvModel<f32>,
    pub initial_heldout: f64,
    pub final_heldout: f64,
    pub losses: Vec<f64>,
    pub checkpoint: Option<PathBuf>,
}

/// Pretrains an ASV model; writes periodic and final checkpoints to `out_dir` when given.
pub fn train_asv(
    speakers: Vec<SpeakerMels>,
    features: &FeatureConfig,
    arch: &AsvConfig,
    cfg: &AsvTrainConfig,
    stamp: &ConfigStamp,
    out_dir: Option<&Path>,
) -> Result<AsvTrainReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = AsvModel::new(arch.clone(), &mut rng)?;
    let mut trainer = AsvTrainer::new(model, speakers, features.clone(), cfg.clone())?;
    let initial = trainer.heldout_loss()?;
    let mut losses = Vec::with_capacity(cfg.steps as usize);
    while trainer.step_count() < cfg.steps {
        losses.push(trainer.train_step()?);
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && trainer.step_count() % cfg.checkpoint_every == 0 {
                trainer
                    .checkpoint(stamp)
                    .save(&dir.join(format!("asv_step{:06}.ckpt", trainer.step_count())))?;
            }
        }
    }
    let final_heldout = trainer.heldout_loss()?;
    let checkpoint = match out_dir {
        Some(dir) => {
            let p = dir.join("asv.ckpt");
            trainer.checkpoint(stamp).save(&p)?;
            Some(p)
        }
        None => None,
    };
    let mut model = trainer.model;
    model.set_origin(Some(stamp.hash.clone()));
    model.freeze();
    Ok(AsvTrainReport {
        model,
        initial_heldout: initial,
        final_heldout,
        losses,
        checkpoint,
    })
}
