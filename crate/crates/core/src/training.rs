//! Joint training of the conversion network, the style-token speaker encoder
//! and the auxiliary speaker classifier.

use std::path::{Path, PathBuf};

use ndarray::{s, Array, Array2, Array3, Axis, Dimension};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asv::AsvModel;
use crate::checkpoint::{Checkpoint, ConfigStamp};
use crate::conversion::{ConversionConfig, Generator, VcSystem};
use crate::data::{stack, window, SpeakerMels};
use crate::features::{FeatureConfig, MelSpectrogram, WindowMode};
use crate::nn::{clip_grad_norm, join, softmax_rows, Adam, AdamConfig, Linear, LinearCache, Module, Param, Real};
use crate::speaker::{speaker_embed, SpeakerCache, SpeakerConfig, SpeakerEncoder, Variant};
use crate::{Error, Result};

/// Reconstruction loss value, its three terms and gradients for each input.
#[derive(Clone, Debug)]
pub struct ReconstructionLoss<F, D: Dimension, E: Dimension> {
    pub value: f64,
    /// Decoder, postnet and content-consistency terms.
    pub terms: [f64; 3],
    pub d_x1: Array<F, D>,
    pub d_x2: Array<F, D>,
    pub d_codes: Array<F, E>,
    pub d_codes2: Array<F, E>,
}

fn check_same<F, D: Dimension>(a: &Array<F, D>, b: &Array<F, D>, what: &str) -> Result<()> {
    if a.shape() != b.shape() || a.is_empty() {
        return Err(Error::Shape(format!("{what}: shapes {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `mean((x - x1)^2) + mean((x - x2)^2) + mean(|codes - codes2|)`.
pub fn reconstruction_loss<F: Real, D: Dimension, E: Dimension>(
    x: &Array<F, D>,
    x1: &Array<F, D>,
    x2: &Array<F, D>,
    codes: &Array<F, E>,
    codes2: &Array<F, E>,
) -> Result<ReconstructionLoss<F, D, E>> {
    check_same(x, x1, "decoder output")?;
    check_same(x, x2, "postnet output")?;
    check_same(codes, codes2, "content codes")?;
    let n = x.len() as f64;
    let nc = codes.len() as f64;
    let mse = |y: &Array<F, D>| {
        let diff = y - x;
        let v = diff.iter().map(|d| d.f64() * d.f64()).sum::<f64>() / n;
        (v, diff.mapv(|d| d * F::of(2.0 / n)))
    };
    let (t1, d_x1) = mse(x1);
    let (t2, d_x2) = mse(x2);
    let diff = codes - codes2;
    let t3 = diff.iter().map(|d| d.f64().abs()).sum::<f64>() / nc;
    let d_codes = diff.mapv(|d| F::of(d.f64().signum() * f64::from(d.f64() != 0.0) / nc));
    let d_codes2 = d_codes.mapv(|g| -g);
    Ok(ReconstructionLoss {
        value: t1 + t2 + t3,
        terms: [t1, t2, t3],
        d_x1,
        d_x2,
        d_codes,
        d_codes2,
    })
}

/// Mean cross-entropy and its gradient for a batch of logits.
#[derive(Clone, Debug)]
pub struct ClassificationLoss<F> {
    pub value: f64,
    pub d_logits: Array2<F>,
}

/// `-log softmax(logits)[label]`, averaged over rows.
pub fn classification_loss<F: Real>(logits: &Array2<F>, labels: &[usize]) -> Result<ClassificationLoss<F>> {
    let (b, k) = logits.dim();
    if labels.len() != b || b == 0 {
        return Err(Error::Shape(format!("{b} logit rows for {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Label { label: bad, classes: k });
    }
    let mut value = 0.0;
    let mut d = Array2::zeros((b, k));
    for (i, (row, &label)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v.f64() - max).exp()).sum::<f64>().ln();
        value += lse - row[label].f64();
        for j in 0..k {
            let p = (row[j].f64() - lse).exp();
            d[[i, j]] = F::of((p - f64::from(j == label)) / b as f64);
        }
    }
    Ok(ClassificationLoss {
        value: value / b as f64,
        d_logits: d,
    })
}

/// Weights of the two objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub rec: f64,
    pub class: f64,
}

pub fn total_loss(l_rec: f64, l_class: f64, w: LossWeights) -> f64 {
    w.rec * l_rec + w.class * l_class
}

/// One fully connected layer from speaker embeddings to training-speaker logits.
#[derive(Clone, Debug)]
pub struct AuxClassifier<F = f32> {
    layer: Linear<F>,
}

impl<F: Real> AuxClassifier<F> {
    pub fn new(embed_dim: usize, classes: usize, rng: &mut impl Rng) -> Self {
        Self {
            layer: Linear::new(embed_dim, classes, true, rng),
        }
    }

    pub fn classes(&self) -> usize {
        self.layer.d_out()
    }

    pub fn logits(&self, emb: &Array2<F>) -> Array2<F> {
        self.layer.apply(emb)
    }

    pub fn forward(&self, emb: &Array2<F>) -> (Array2<F>, LinearCache<F>) {
        self.layer.forward(emb)
    }

    pub fn backward(&mut self, cache: &LinearCache<F>, dlogits: &Array2<F>) -> Array2<F> {
        self.layer.backward(cache, dlogits)
    }

    /// Class probabilities, one row per embedding.
    pub fn probabilities(&self, emb: &Array2<F>) -> Array2<F> {
        softmax_rows(&self.logits(emb))
    }
}

impl<F: Real> Module<F> for AuxClassifier<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.layer.visit(&join(prefix, "fc"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.layer.visit_mut(&join(prefix, "fc"), f);
    }
}

/// Fraction of rows whose arg-max logit matches the label.
pub fn classifier_accuracy<F: Real>(classifier: &AuxClassifier<F>, embeddings: &Array2<F>, labels: &[usize]) -> Result<f64> {
    if embeddings.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!("{} embeddings for {} labels", embeddings.nrows(), labels.len())));
    }
    let logits = classifier.logits(embeddings);
    let hits = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &l)| {
            let best = row
                .iter()
                .enumerate()
                .fold((0, F::neg_infinity()), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            best.0 == l
        })
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub lambda_rec: f64,
    pub lambda_class: f64,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_rec: 1.0,
            lambda_class: 0.5,
            steps: 2000,
            batch_size: 8,
            lr: 1e-4,
            grad_clip: 1.0,
            seed: 0,
            checkpoint_every: 500,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_rec >= 0.0 && self.lambda_class >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.batch_size == 0 || !(self.lr > 0.0) || self.grad_clip < 0.0 {
            return Err(Error::Config("batch size and learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Effective weights: the classification term only applies to the DGC variant.
    pub fn weights(&self, variant: Variant) -> LossWeights {
        LossWeights {
            rec: self.lambda_rec,
            class: if variant == Variant::Dgc { self.lambda_class } else { 0.0 },
        }
    }
}

/// Network shapes of a conversion system.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct VcArch {
    pub conversion: ConversionConfig,
    pub speaker: SpeakerConfig,
}


/// All trainable parts of a conversion system.
#[derive(Clone, Debug)]
pub struct VcModel<F = f32> {
    pub arch: VcArch,
    pub generator: Generator<F>,
    pub speaker: SpeakerEncoder<F>,
    /// Present for the DGC variant only.
    pub classifier: Option<AuxClassifier<F>>,
}

fn init_rng(seed: u64, part: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(u64::MAX - part);
    r
}

impl<F: Real> VcModel<F> {
    /// Each part draws from its own random stream, so optional parts do not
    /// shift the initialization of the others.
    pub fn new(arch: &VcArch, dsequence_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let variant = arch.speaker.variant;
        if variant == Variant::Dgc && classes < 2 {
            return Err(Error::InsufficientData("the speaker classifier needs at least 2 classes".into()));
        }
        let embed_dim = if variant == Variant::D { dsequence_dim } else { arch.speaker.embed_dim };
        Ok(Self {
            generator: Generator::new(&arch.conversion, embed_dim, &mut init_rng(seed, 0))?,
            speaker: SpeakerEncoder::new(&arch.speaker, dsequence_dim, &mut init_rng(seed, 1))?,
            classifier: (variant == Variant::Dgc).then(|| AuxClassifier::new(embed_dim, classes, &mut init_rng(seed, 2))),
            arch: arch.clone(),
        })
    }

    pub fn variant(&self) -> Variant {
        self.arch.speaker.variant
    }
}

impl<F: Real> Module<F> for VcModel<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.generator.visit(&join(prefix, "generator"), f);
        self.speaker.visit(&join(prefix, "speaker"), f);
        if let Some(c) = &self.classifier {
            c.visit(&join(prefix, "classifier"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.generator.visit_mut(&join(prefix, "generator"), f);
        self.speaker.visit_mut(&join(prefix, "speaker"), f);
        if let Some(c) = &mut self.classifier {
            c.visit_mut(&join(prefix, "classifier"), f);
        }
    }
}

/// Losses of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub step: u64,
    pub l_rec: f64,
    pub l_class: f64,
    pub total: f64,
}

pub struct VcTrainer {
    pub model: VcModel<f32>,
    asv: Option<AsvModel<f32>>,
    adam: Adam<f32>,
    cfg: TrainingConfig,
    features: FeatureConfig,
    speakers: Vec<SpeakerMels>,
    step: u64,
}

/// Speaker embeddings of a batch and what is needed to backpropagate into them.
enum EmbedPass<F> {
    Fixed,
    Style(SpeakerCache<F>),
}

impl VcTrainer {
    /// The ASV model must be present (and frozen) exactly when the variant uses it.
    pub fn new(
        model: VcModel<f32>,
        asv: Option<AsvModel<f32>>,
        speakers: Vec<SpeakerMels>,
        features: FeatureConfig,
        cfg: TrainingConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let variant = model.variant();
        match (&asv, variant.needs_asv()) {
            (None, true) => {
                return Err(Error::MissingModel(format!("variant {variant} needs a pretrained ASV model")));
            }
            (Some(_), false) => {
                return Err(Error::Config(format!("variant {variant} does not use an ASV model")));
            }
            (Some(a), true) if !a.is_frozen() => {
                return Err(Error::State("the ASV model must be frozen before conversion training".into()));
            }
            _ => {}
        }
        if speakers.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "conversion training needs at least 2 speakers, got {}",
                speakers.len()
            )));
        }
        if let Some(s) = speakers.iter().find(|s| s.train.is_empty()) {
            return Err(Error::InsufficientData(format!("speaker {} has no training utterances", s.id)));
        }
        if let Some(c) = &model.classifier {
            if c.classes() != speakers.len() {
                return Err(Error::Shape(format!(
                    "classifier has {} classes for {} speakers",
                    c.classes(),
                    speakers.len()
                )));
            }
        }
        let adam = Adam::new(AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        });
        Ok(Self {
            model,
            asv,
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

    pub fn asv(&self) -> Option<&AsvModel<f32>> {
        self.asv.as_ref()
    }

    pub fn speaker_ids(&self) -> Vec<String> {
        self.speakers.iter().map(|s| s.id.clone()).collect()
    }

    /// Samples training windows: returns normalized `[B, T, 80]` windows,
    /// their valid lengths and speaker labels.
    fn sample_batch(&self, rng: &mut ChaCha8Rng) -> Result<(Vec<Array2<f64>>, Vec<usize>, Vec<usize>)> {
        let seg = self.model.arch.conversion.segment_frames;
        let mut wins = Vec::with_capacity(self.cfg.batch_size);
        let mut valid = Vec::with_capacity(self.cfg.batch_size);
        let mut labels = Vec::with_capacity(self.cfg.batch_size);
        for _ in 0..self.cfg.batch_size {
            let si = rng.random_range(0..self.speakers.len());
            let spk = &self.speakers[si];
            let ui = rng.random_range(0..spk.train.len());
            let (w, v) = window(&spk.train[ui], seg, WindowMode::Train, &self.features, rng)?;
            wins.push(w);
            valid.push(v);
            labels.push(si);
        }
        Ok((wins, valid, labels))
    }

    /// Speaker embeddings of reference windows cut to their shortest valid length.
    fn embed_batch(&self, x: &Array3<f32>, valid: &[usize], train: bool) -> Result<(Array2<f32>, EmbedPass<f32>)> {
        let seg = x.dim().1;
        let min = self.model.speaker.min_frames();
        let len = valid.iter().copied().min().unwrap_or(seg).max(min).min(seg);
        let reference = x.slice(s![.., ..len, ..]).to_owned();
        match self.model.variant() {
            Variant::D => {
                let asv = self.asv.as_ref().expect("checked at construction");
                Ok((asv.dvector_batch(&reference).mapv(|v| v as f32), EmbedPass::Fixed))
            }
            v => {
                let input = if v.uses_dsequence() {
                    self.asv.as_ref().expect("checked at construction").dsequence_batch(&reference)
                } else {
                    reference
                };
                let (emb, cache) = self.model.speaker.forward(&input, train)?;
                Ok((emb, EmbedPass::Style(cache)))
            }
        }
    }

    /// One optimizer update on a freshly sampled batch.
    pub fn train_step(&mut self) -> Result<StepLosses> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(self.step + 1);
        let (wins, valid, labels) = self.sample_batch(&mut rng)?;
        let x = stack::<f32>(&wins);
        let weights = self.cfg.weights(self.model.variant());

        self.model.zero_grad();
        let (emb, pass) = self.embed_batch(&x, &valid, true)?;
        let g = &self.model.generator;
        let (rec, gcache) = g.forward(&x, &emb, &emb, true)?;
        let (codes2, c2cache) = g.content.forward(&rec.x2, &emb, true)?;
        let lr = reconstruction_loss(&x, &rec.x1, &rec.x2, &rec.codes, &codes2)?;

        let scale_rec = weights.rec as f32;
        let mut demb;
        {
            let gen = &mut self.model.generator;
            let (dx2_cycle, demb_cycle) = gen.content.backward(&c2cache, &lr.d_codes2.mapv(|v| v * scale_rec));
            let dx2 = lr.d_x2.mapv(|v| v * scale_rec) + dx2_cycle;
            let dcodes = lr.d_codes.mapv(|v| v * scale_rec);
            let (_, dsrc, dtgt) = gen.backward(&gcache, &lr.d_x1.mapv(|v| v * scale_rec), &dx2, Some(&dcodes));
            demb = demb_cycle + dsrc + dtgt;
        }

        let l_class = match self.model.classifier.as_mut() {
            Some(clf) => {
                let (logits, ccache) = clf.forward(&emb);
                let cl = classification_loss(&logits, &labels)?;
                let demb_class = clf.backward(&ccache, &cl.d_logits.mapv(|v| v * weights.class as f32));
                demb += &demb_class;
                cl.value
            }
            None => 0.0,
        };
        if let EmbedPass::Style(cache) = &pass {
            self.model.speaker.backward(cache, &demb);
        }
        clip_grad_norm(&mut self.model, self.cfg.grad_clip);
        self.adam.step(&mut self.model);
        self.step += 1;
        Ok(StepLosses {
            step: self.step,
            l_rec: lr.value,
            l_class,
            total: total_loss(lr.value, l_class, weights),
        })
    }

    /// Parameters, frozen ASV and optimizer state.
    pub fn checkpoint(&self, stamp: &ConfigStamp) -> Checkpoint {
        let mut ck = vc_checkpoint(&self.model, self.asv.as_ref(), &self.features, &self.speaker_ids(), self.step, stamp);
        for (i, (m, v)) in self.adam.moments().iter().enumerate() {
            ck.insert(&format!("adam.m.{i}"), m.mapv(f64::from));
            ck.insert(&format!("adam.v.{i}"), v.mapv(f64::from));
        }
        if let Some(meta) = ck.meta.as_object_mut() {
            meta.insert("adam_steps".into(), self.adam.steps().into());
        }
        ck
    }
}

/// Checkpoint of a conversion system without optimizer state.
pub fn vc_checkpoint(
    model: &VcModel<f32>,
    asv: Option<&AsvModel<f32>>,
    features: &FeatureConfig,
    speakers: &[String],
    step: u64,
    stamp: &ConfigStamp,
) -> Checkpoint {
    let mut ck = Checkpoint::new("vc", step, &stamp.hash, stamp.config.clone());
    ck.insert_module("", model);
    if let Some(a) = asv {
        a.to_checkpoint("asv", &mut ck);
    }
    ck.meta = serde_json::json!({
        "arch": model.arch,
        "variant": model.variant(),
        "features": features,
        "speakers": speakers,
        "asv_arch": asv.map(|a| a.config().clone()),
        "asv_checksum": asv.map(|a| a.checksum()),
        "asv_config_hash": asv.and_then(|a| a.origin()),
    });
    ck
}

/// A conversion system restored from a `vc` checkpoint.
#[derive(Clone, Debug)]
pub struct LoadedVc {
    pub system: VcSystem<f32>,
    pub classifier: Option<AuxClassifier<f32>>,
    pub variant: Variant,
    /// Training speakers in classifier label order.
    pub speakers: Vec<String>,
    pub config_hash: String,
}

fn meta_field<T: serde::de::DeserializeOwned>(ck: &Checkpoint, key: &str) -> Result<T> {
    let v = ck
        .meta
        .get(key)
        .ok_or_else(|| Error::Integrity(format!("checkpoint lacks the {key} record")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Integrity(format!("bad {key} record: {e}")))
}

pub fn load_vc(path: &Path) -> Result<LoadedVc> {
    vc_from_checkpoint(&Checkpoint::load(path)?)
}

pub fn vc_from_checkpoint(ck: &Checkpoint) -> Result<LoadedVc> {
    ck.expect_kind("vc")?;
    let arch: VcArch = meta_field(ck, "arch")?;
    let features: FeatureConfig = meta_field(ck, "features")?;
    let speakers: Vec<String> = meta_field(ck, "speakers")?;
    let asv_cfg: Option<crate::asv::AsvConfig> = meta_field(ck, "asv_arch")?;
    let asv = match asv_cfg {
        Some(cfg) => {
            let mut a = AsvModel::from_checkpoint(ck, "asv", cfg)?;
            let origin: Option<String> = meta_field(ck, "asv_config_hash").unwrap_or(None);
            a.set_origin(origin);
            a.freeze();
            let recorded: Option<String> = meta_field(ck, "asv_checksum")?;
            if recorded.as_deref() != Some(a.checksum().as_str()) {
                return Err(Error::Integrity("stored ASV parameters do not match their checksum".into()));
            }
            Some(a)
        }
        None => None,
    };
    let dseq = asv.as_ref().map_or(0, |a| a.embed_dim());
    let mut model = VcModel::<f32>::new(&arch, dseq, speakers.len(), 0)?;
    ck.load_module("", &mut model)?;
    let variant = model.variant();
    if variant.needs_asv() && asv.is_none() {
        return Err(Error::Integrity(format!("variant {variant} checkpoint carries no ASV model")));
    }
    Ok(LoadedVc {
        system: VcSystem {
            features,
            generator: model.generator,
            speaker: model.speaker,
            asv,
        },
        classifier: model.classifier,
        variant,
        speakers,
        config_hash: ck.config_hash.clone(),
    })
}

/// Everything [`train_vc`] produced.
#[derive(Debug)]
pub struct VcTrainReport {
    pub model: VcModel<f32>,
    pub asv: Option<AsvModel<f32>>,
    pub losses: Vec<StepLosses>,
    pub checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
}

/// Writes the loss curve as `step,l_rec,l_class,total`.
pub fn write_loss_csv(path: &Path, losses: &[StepLosses]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for l in losses {
        w.serialize(l)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trains a conversion system from scratch. With `out_dir`, writes periodic
/// checkpoints, the checkpoint with the lowest mean loss over a checkpoint
/// interval, the final checkpoint and the loss curve.
pub fn train_vc(
    speakers: Vec<SpeakerMels>,
    asv: Option<AsvModel<f32>>,
    features: &FeatureConfig,
    arch: &VcArch,
    cfg: &TrainingConfig,
    stamp: &ConfigStamp,
    out_dir: Option<&Path>,
) -> Result<VcTrainReport> {
    let dseq = asv.as_ref().map_or(0, |a| a.embed_dim());
    let model = VcModel::new(arch, dseq, speakers.len(), cfg.seed)?;
    let mut trainer = VcTrainer::new(model, asv, speakers, features.clone(), cfg.clone())?;
    let mut losses = Vec::with_capacity(cfg.steps as usize);
    let mut best = f64::INFINITY;
    let mut best_checkpoint = None;
    while trainer.step_count() < cfg.steps {
        losses.push(trainer.train_step()?);
        let step = trainer.step_count();
        if let (Some(dir), true) = (out_dir, cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            let ck = trainer.checkpoint(stamp);
            ck.save(&dir.join(format!("vc_step{step:06}.ckpt")))?;
            let recent = &losses[losses.len().saturating_sub(cfg.checkpoint_every as usize)..];
            let mean = recent.iter().map(|l| l.total).sum::<f64>() / recent.len() as f64;
            if mean < best {
                best = mean;
                let p = dir.join("vc_best.ckpt");
                ck.save(&p)?;
                best_checkpoint = Some(p);
            }
        }
    }
    let checkpoint = match out_dir {
        Some(dir) => {
            write_loss_csv(&dir.join("losses.csv"), &losses)?;
            let p = dir.join("vc.ckpt");
            trainer.checkpoint(stamp).save(&p)?;
            Some(p)
        }
        None => None,
    };
    Ok(VcTrainReport {
        model: trainer.model,
        asv: trainer.asv,
        losses,
        checkpoint,
        best_checkpoint,
    })
}

/// Speaker embeddings of whole utterances under a trained system, one row each.
pub fn embed_utterances(system: &VcSystem<f32>, mels: &[MelSpectrogram]) -> Result<Array2<f32>> {
    let rows = mels
        .iter()
        .map(|m| Ok(speaker_embed(&system.speaker, m, &system.features, system.asv.as_ref())?.vector))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    Ok(ndarray::stack(Axis(0), &views)
        .map_err(|e| Error::Shape(e.to_string()))?
        .mapv(|v| v as f32))
}

/// Mean reconstruction loss of the first window of each utterance in eval mode.
pub fn eval_reconstruction(system: &VcSystem<f32>, mels: &[MelSpectrogram]) -> Result<f64> {
    let seg = system.generator.cfg.segment_frames;
    let mut total = 0.0;
    for m in mels {
        let e = speaker_embed(&system.speaker, m, &system.features, system.asv.as_ref())?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (w, _) = window(m, seg, WindowMode::Eval, &system.features, &mut rng)?;
        let x = stack::<f32>(&[w]);
        let emb = e.vector.mapv(|v| v as f32).insert_axis(Axis(0));
        let g = &system.generator;
        let (rec, _) = g.forward(&x, &emb, &emb, false)?;
        let (codes2, _) = g.content.forward(&rec.x2, &emb, false)?;
        total += reconstruction_loss(&x, &rec.x1, &rec.x2, &rec.codes, &codes2)?.value;
    }
    Ok(total / mels.len().max(1) as f64)
}
