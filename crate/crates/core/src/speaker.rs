//! Speaker embeddings: D-vectors, and style-token embeddings of a mel or D-sequence reference.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Array3, Array4, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asv::AsvModel;
use crate::data::{normalize_mel, stack};
use crate::features::{FeatureConfig, MelSpectrogram, N_MELS};
use crate::nn::{
    join, relu, relu_backward, softmax_rows, tanh_backward, BatchNorm, BatchNormCache, Conv2d, Conv2dCache, Gru,
    GruCache, Module, Param, Real,
};
use crate::{Error, Result};

/// Speaker-embedding family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Frozen verification-model D-vector.
    D,
    /// Style tokens over the mel spectrogram.
    G,
    /// Style tokens over the D-sequence.
    Dg,
    /// `Dg` with auxiliary speaker classification during training.
    Dgc,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::D, Variant::G, Variant::Dg, Variant::Dgc];

    pub fn needs_asv(self) -> bool {
        self != Variant::G
    }

    pub fn uses_style_tokens(self) -> bool {
        self != Variant::D
    }

    pub fn uses_dsequence(self) -> bool {
        matches!(self, Variant::Dg | Variant::Dgc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::D => "d",
            Variant::G => "g",
            Variant::Dg => "dg",
            Variant::Dgc => "dgc",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d" => Ok(Variant::D),
            "g" => Ok(Variant::G),
            "dg" => Ok(Variant::Dg),
            "dgc" => Ok(Variant::Dgc),
            other => Err(Error::Config(format!("unknown variant {other:?} (expected d, g, dg or dgc)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeakerConfig {
    pub variant: Variant,
    pub conv_channels: Vec<usize>,
    pub gru_hidden: usize,
    pub n_tokens: usize,
    pub token_dim: usize,
    pub heads: usize,
    pub embed_dim: usize,
}

impl Default for SpeakerConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Dgc,
            conv_channels: vec![32, 64, 128],
            gru_hidden: 256,
            n_tokens: 10,
            token_dim: 256,
            heads: 4,
            embed_dim: 256,
        }
    }
}

impl SpeakerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(Error::Config("reference encoder needs at least one non-empty conv layer".into()));
        }
        if self.n_tokens == 0 || self.token_dim == 0 || self.gru_hidden == 0 {
            return Err(Error::Config("token bank and GRU sizes must be positive".into()));
        }
        if self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "embedding width {} is not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }

    /// Shortest reference (in frames) the strided convolutions accept.
    pub fn min_frames(&self) -> usize {
        1 << self.conv_channels.len()
    }
}

/// Strided 2-D conv stack followed by a GRU; the final GRU state summarizes the input.
#[derive(Clone, Debug)]
pub struct ReferenceEncoder<F> {
    convs: Vec<Conv2d<F>>,
    norms: Vec<BatchNorm<F>>,
    gru: Gru<F>,
    in_dim: usize,
    min_frames: usize,
}

pub struct ReferenceCache<F> {
    layers: Vec<(Conv2dCache<F>, BatchNormCache<F>, Array4<F>)>,
    gru: GruCache<F>,
    map: (usize, usize, usize, usize),
    in_dims: (usize, usize, usize),
}

impl<F: Real> ReferenceEncoder<F> {
    pub fn new(in_dim: usize, channels: &[usize], hidden: usize, rng: &mut impl Rng) -> Self {
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let mut c_in = 1;
        let mut width = in_dim;
        for &c in channels {
            convs.push(Conv2d::new(c_in, c, 3, 2, 1, rng));
            norms.push(BatchNorm::new(c));
            c_in = c;
            width = width.div_ceil(2);
        }
        Self {
            gru: Gru::new(width * c_in, hidden, rng),
            convs,
            norms,
            in_dim,
            min_frames: 1 << channels.len(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn min_frames(&self) -> usize {
        self.min_frames
    }

    /// `[B, T, in_dim]` to the final GRU state `[B, hidden]`.
    pub fn forward(&self, x: &Array3<F>, train: bool) -> Result<(Array2<F>, ReferenceCache<F>)> {
        let (b, t, d) = x.dim();
        if d != self.in_dim {
            return Err(Error::Shape(format!("reference encoder expects {} features, got {d}", self.in_dim)));
        }
        if t < self.min_frames {
            return Err(Error::TooShort {
                what: "reference frames",
                len: t,
                min: self.min_frames,
            });
        }
        let mut h = x.clone().insert_axis(Axis(3));
        let mut layers = Vec::with_capacity(self.convs.len());
        for (conv, bn) in self.convs.iter().zip(&self.norms) {
            let (y, cc) = conv.forward(&h);
            let (bb, hh, ww, c) = y.dim();
            let flat = y.into_shape_with_order((bb * hh * ww, c)).expect("contiguous");
            let (z, bc) = bn.forward(&flat, train);
            let a = relu(&z).into_shape_with_order((bb, hh, ww, c)).expect("contiguous");
            layers.push((cc, bc, a.clone()));
            h = a;
        }
        let map = h.dim();
        let seq = h.into_shape_with_order((map.0, map.1, map.2 * map.3)).expect("contiguous");
        let (states, gc) = self.gru.forward(&seq);
        let last = states.index_axis(Axis(1), map.1 - 1).to_owned();
        Ok((
            last,
            ReferenceCache {
                layers,
                gru: gc,
                map,
                in_dims: (b, t, d),
            },
        ))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &ReferenceCache<F>, dlast: &Array2<F>) -> Array3<F> {
        let (b, t2, w2, c2) = cache.map;
        let mut dstates = Array3::zeros((b, t2, self.gru.hidden()));
        dstates.index_axis_mut(Axis(1), t2 - 1).assign(dlast);
        let dseq = self.gru.backward(&cache.gru, &dstates);
        let mut dh = dseq.into_shape_with_order((b, t2, w2, c2)).expect("contiguous");
        for ((conv, bn), (cc, bc, a)) in self.convs.iter_mut().zip(self.norms.iter_mut()).zip(&cache.layers).rev() {
            let (bb, hh, ww, c) = a.dim();
            let dz = relu_backward(a, &dh).into_shape_with_order((bb * hh * ww, c)).expect("contiguous");
            let dy = bn.backward(bc, &dz).into_shape_with_order((bb, hh, ww, c)).expect("contiguous");
            dh = conv.backward(cc, &dy);
        }
        let (b, t, d) = cache.in_dims;
        dh.into_shape_with_order((b, t, d)).expect("contiguous")
    }
}

impl<F: Real> Module<F> for ReferenceEncoder<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        for (i, (c, n)) in self.convs.iter().zip(&self.norms).enumerate() {
            c.visit(&join(prefix, &format!("conv{i}")), f);
            n.visit(&join(prefix, &format!("bn{i}")), f);
        }
        self.gru.visit(&join(prefix, "gru"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        for (i, (c, n)) in self.convs.iter_mut().zip(self.norms.iter_mut()).enumerate() {
            c.visit_mut(&join(prefix, &format!("conv{i}")), f);
            n.visit_mut(&join(prefix, &format!("bn{i}")), f);
        }
        self.gru.visit_mut(&join(prefix, "gru"), f);
    }
}

/// Learnable token bank attended by a query through multi-head scaled dot-product attention.
/// Heads are concatenated without an output projection.
#[derive(Clone, Debug)]
pub struct StyleTokenLayer<F> {
    pub tokens: Param<F>,
    pub w_query: Param<F>,
    pub w_key: Param<F>,
    pub w_value: Param<F>,
    heads: usize,
}

pub struct StyleCache<F> {
    query: Array2<F>,
    q: Array2<F>,
    tanh_tokens: Array2<F>,
    keys: Array2<F>,
    values: Array2<F>,
    /// `[B, heads, n_tokens]`.
    weights: Array3<F>,
}

impl<F: Real> StyleCache<F> {
    pub fn weights(&self) -> &Array3<F> {
        &self.weights
    }
}

impl<F: Real> StyleTokenLayer<F> {
    pub fn new(query_dim: usize, n_tokens: usize, token_dim: usize, out_dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || !out_dim.is_multiple_of(heads) || n_tokens == 0 {
            return Err(Error::Config(format!(
                "style attention needs width {out_dim} divisible by {heads} heads and at least one token"
            )));
        }
        let xavier = |a: usize, b: usize| (6.0 / (a + b) as f64).sqrt();
        Ok(Self {
            tokens: Param::normal(n_tokens, token_dim, 0.5, rng),
            w_query: Param::uniform(query_dim, out_dim, xavier(query_dim, out_dim), rng),
            w_key: Param::uniform(token_dim, out_dim, xavier(token_dim, out_dim), rng),
            w_value: Param::uniform(token_dim, out_dim, xavier(token_dim, out_dim), rng),
            heads,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn out_dim(&self) -> usize {
        self.w_value.value.ncols()
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.value.nrows()
    }

    /// `[B, query_dim]` to `[B, out_dim]`.
    pub fn forward(&self, query: &Array2<F>) -> (Array2<F>, StyleCache<F>) {
        let b = query.nrows();
        let n = self.n_tokens();
        let dh = self.out_dim() / self.heads;
        let scale = F::of(1.0 / (dh as f64).sqrt());
        let tanh_tokens = self.tokens.value.mapv(|v| v.tanh());
        let keys = tanh_tokens.dot(&self.w_key.value);
        let values = tanh_tokens.dot(&self.w_value.value);
        let q = query.dot(&self.w_query.value);
        let mut out = Array2::zeros((b, self.out_dim()));
        let mut weights = Array3::zeros((b, self.heads, n));
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let scores = q.slice(cols).dot(&keys.slice(cols).t()) * scale;
            let a = softmax_rows(&scores);
            out.slice_mut(cols).assign(&a.dot(&values.slice(cols)));
            weights.slice_mut(s![.., h, ..]).assign(&a);
        }
        (
            out,
            StyleCache {
                query: query.clone(),
                q,
                tanh_tokens,
                keys,
                values,
                weights,
            },
        )
    }

    pub fn backward(&mut self, cache: &StyleCache<F>, dout: &Array2<F>) -> Array2<F> {
        let dh = self.out_dim() / self.heads;
        let scale = F::of(1.0 / (dh as f64).sqrt());
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.keys.raw_dim());
        let mut dv = Array2::zeros(cache.values.raw_dim());
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let a = cache.weights.slice(s![.., h, ..]).to_owned();
            let d_o = dout.slice(cols);
            dv.slice_mut(cols).assign(&a.t().dot(&d_o));
            let da = d_o.dot(&cache.values.slice(cols).t());
            let row_dot = (&da * &a).sum_axis(Axis(1)).insert_axis(Axis(1));
            let dscores = (&da - &row_dot) * &a * scale;
            dq.slice_mut(cols).assign(&dscores.dot(&cache.keys.slice(cols)));
            dk.slice_mut(cols).assign(&dscores.t().dot(&cache.q.slice(cols)));
        }
        self.w_query.grad += &cache.query.t().dot(&dq);
        self.w_key.grad += &cache.tanh_tokens.t().dot(&dk);
        self.w_value.grad += &cache.tanh_tokens.t().dot(&dv);
        let dtanh = dk.dot(&self.w_key.value.t()) + dv.dot(&self.w_value.value.t());
        self.tokens.grad += &tanh_backward(&cache.tanh_tokens, &dtanh);
        dq.dot(&self.w_query.value.t())
    }
}

impl<F: Real> Module<F> for StyleTokenLayer<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        f(&join(prefix, "tokens"), &self.tokens);
        f(&join(prefix, "w_query"), &self.w_query);
        f(&join(prefix, "w_key"), &self.w_key);
        f(&join(prefix, "w_value"), &self.w_value);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        f(&join(prefix, "tokens"), &mut self.tokens);
        f(&join(prefix, "w_query"), &mut self.w_query);
        f(&join(prefix, "w_key"), &mut self.w_key);
        f(&join(prefix, "w_value"), &mut self.w_value);
    }
}

/// Trainable part of the speaker encoder; empty for the D-vector variant.
#[derive(Clone, Debug)]
pub struct SpeakerEncoder<F = f32> {
    variant: Variant,
    embed_dim: usize,
    style: Option<(ReferenceEncoder<F>, StyleTokenLayer<F>)>,
}

pub struct SpeakerCache<F> {
    reference: ReferenceCache<F>,
    style: StyleCache<F>,
}

impl<F: Real> SpeakerCache<F> {
    pub fn attention(&self) -> &Array3<F> {
        self.style.weights()
    }
}

impl<F: Real> SpeakerEncoder<F> {
    /// `dsequence_dim` is the ASV embedding width used by the D-sequence variants.
    pub fn new(cfg: &SpeakerConfig, dsequence_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let style = if cfg.variant.uses_style_tokens() {
            let in_dim = if cfg.variant.uses_dsequence() { dsequence_dim } else { N_MELS };
            let reference = ReferenceEncoder::new(in_dim, &cfg.conv_channels, cfg.gru_hidden, rng);
            let tokens = StyleTokenLayer::new(cfg.gru_hidden, cfg.n_tokens, cfg.token_dim, cfg.embed_dim, cfg.heads, rng)?;
            Some((reference, tokens))
        } else {
            None
        };
        Ok(Self {
            variant: cfg.variant,
            embed_dim: cfg.embed_dim,
            style,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Minimum reference length in frames.
    pub fn min_frames(&self) -> usize {
        self.style.as_ref().map_or(1, |(r, _)| r.min_frames())
    }

    /// Style-token embedding of a reference batch `[B, T, D]` (normalized mel or D-sequence).
    pub fn forward(&self, reference: &Array3<F>, train: bool) -> Result<(Array2<F>, SpeakerCache<F>)> {
        let (enc, tokens) = self
            .style
            .as_ref()
            .ok_or_else(|| Error::State("the D-vector variant has no trainable speaker encoder".into()))?;
        let (query, rc) = enc.forward(reference, train)?;
        let (emb, sc) = tokens.forward(&query);
        Ok((emb, SpeakerCache { reference: rc, style: sc }))
    }

    pub fn backward(&mut self, cache: &SpeakerCache<F>, demb: &Array2<F>) {
        if let Some((enc, tokens)) = self.style.as_mut() {
            let dq = tokens.backward(&cache.style, demb);
            enc.backward(&cache.reference, &dq);
        }
    }

    pub fn style_layer(&self) -> Option<&StyleTokenLayer<F>> {
        self.style.as_ref().map(|(_, t)| t)
    }

    pub fn reference_encoder(&self) -> Option<&ReferenceEncoder<F>> {
        self.style.as_ref().map(|(r, _)| r)
    }

    /// Input of the style pathway for one utterance: the normalized mel or the D-sequence.
    pub fn reference_input(&self, mel: &MelSpectrogram, features: &FeatureConfig, asv: Option<&AsvModel<F>>) -> Result<Array2<f64>> {
        if self.variant.uses_dsequence() {
            let asv = asv.ok_or_else(|| missing_asv(self.variant))?;
            Ok(asv.dsequence(mel, features)?.frames().clone())
        } else {
            Ok(normalize_mel(mel.frames(), features))
        }
    }
}

impl<F: Real> Module<F> for SpeakerEncoder<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        if let Some((r, t)) = &self.style {
            r.visit(&join(prefix, "reference"), f);
            t.visit(&join(prefix, "tokens"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        if let Some((r, t)) = &mut self.style {
            r.visit_mut(&join(prefix, "reference"), f);
            t.visit_mut(&join(prefix, "tokens"), f);
        }
    }
}

fn missing_asv(v: Variant) -> Error {
    Error::MissingModel(format!("variant {v} needs a pretrained ASV model"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerEmbedding {
    pub vector: Array1<f64>,
    pub variant: Variant,
}

/// Utterance-level speaker embedding of `reference` for the encoder's variant.
pub fn speaker_embed<F: Real>(
    encoder: &SpeakerEncoder<F>,
    reference: &MelSpectrogram,
    features: &FeatureConfig,
    asv: Option<&AsvModel<F>>,
) -> Result<SpeakerEmbedding> {
    let variant = encoder.variant();
    if variant.needs_asv() && asv.is_none() {
        return Err(missing_asv(variant));
    }
    let vector = match (variant, asv) {
        (Variant::D, Some(asv)) => asv.dvector(reference, features)?.into_inner(),
        _ => {
            let input = encoder.reference_input(reference, features, asv)?;
            let (emb, _) = encoder.forward(&stack::<F>(&[input]), false)?;
            emb.row(0).mapv(|v| v.f64())
        }
    };
    Ok(SpeakerEmbedding { vector, variant })
}
