//! Bottleneck autoencoder: content encoder, decoder and postnet, plus the
//! windowed conversion path.

use ndarray::{s, Array2, Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asv::AsvModel;
use crate::data::{denormalize_mel, normalize_mel, stack};
use crate::features::{FeatureConfig, MelSpectrogram, N_MELS};
use crate::nn::{
    join, relu, relu_backward, tanh_backward, BatchNorm, BatchNormCache, BiLstm, BiLstmCache, Conv1d, Conv1dCache,
    Linear, LinearCache, Lstm, LstmCache, Module, Param, Real,
};
use crate::speaker::{speaker_embed, SpeakerEmbedding, SpeakerEncoder};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConversionConfig {
    /// Code width per recurrent direction.
    pub neck: usize,
    /// Temporal downsampling factor of the codes.
    pub downsample: usize,
    /// Training and inference window length in frames.
    pub segment_frames: usize,
    pub kernel: usize,
    pub encoder_channels: usize,
    pub encoder_convs: usize,
    pub encoder_lstm_layers: usize,
    pub decoder_pre: usize,
    pub decoder_channels: usize,
    pub decoder_convs: usize,
    pub decoder_hidden: usize,
    pub decoder_lstm_layers: usize,
    pub postnet_channels: usize,
    pub postnet_layers: usize,
}

impl Default for ConversionConfig {
    fn default() -> Self {
        Self {
            neck: 32,
            downsample: 32,
            segment_frames: 160,
            kernel: 5,
            encoder_channels: 512,
            encoder_convs: 3,
            encoder_lstm_layers: 2,
            decoder_pre: 512,
            decoder_channels: 512,
            decoder_convs: 3,
            decoder_hidden: 1024,
            decoder_lstm_layers: 3,
            postnet_channels: 512,
            postnet_layers: 5,
        }
    }
}

impl ConversionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.neck,
            self.downsample,
            self.segment_frames,
            self.encoder_channels,
            self.encoder_lstm_layers,
            self.decoder_pre,
            self.decoder_channels,
            self.decoder_hidden,
            self.decoder_lstm_layers,
            self.postnet_channels,
        ];
        if positive.contains(&0) || self.postnet_layers < 2 {
            return Err(Error::Config(format!("invalid conversion architecture {self:?}")));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel width {} must be odd", self.kernel)));
        }
        if !self.segment_frames.is_multiple_of(self.downsample) {
            return Err(Error::Config(format!(
                "segment of {} frames is not divisible by the downsample factor {}",
                self.segment_frames, self.downsample
            )));
        }
        Ok(())
    }

    pub fn code_frames(&self) -> usize {
        self.segment_frames / self.downsample
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Activation {
    Relu,
    Tanh,
    Identity,
}

/// Conv1d, batch norm and an activation.
#[derive(Clone, Debug)]
struct ConvBlock<F> {
    conv: Conv1d<F>,
    norm: BatchNorm<F>,
    act: Activation,
}

struct ConvBlockCache<F> {
    conv: Conv1dCache<F>,
    norm: BatchNormCache<F>,
    out: Array3<F>,
}

impl<F: Real> ConvBlock<F> {
    fn new(c_in: usize, c_static: usize, c_out: usize, kernel: usize, act: Activation, rng: &mut impl Rng) -> Self {
        Self {
            conv: Conv1d::new(c_in, c_static, c_out, kernel, rng),
            norm: BatchNorm::new(c_out),
            act,
        }
    }

    fn forward(&self, x: &Array3<F>, stat: Option<&Array2<F>>, train: bool) -> (Array3<F>, ConvBlockCache<F>) {
        let (y, cc) = self.conv.forward(x, stat);
        let (b, t, c) = y.dim();
        let (z, nc) = self.norm.forward(&y.into_shape_with_order((b * t, c)).expect("contiguous"), train);
        let z = z.into_shape_with_order((b, t, c)).expect("contiguous");
        let out = match self.act {
            Activation::Relu => relu(&z),
            Activation::Tanh => z.mapv(|v| v.tanh()),
            Activation::Identity => z,
        };
        (
            out.clone(),
            ConvBlockCache {
                conv: cc,
                norm: nc,
                out,
            },
        )
    }

    fn backward(&mut self, cache: &ConvBlockCache<F>, dy: &Array3<F>) -> (Array3<F>, Option<Array2<F>>) {
        let dz = match self.act {
            Activation::Relu => relu_backward(&cache.out, dy),
            Activation::Tanh => tanh_backward(&cache.out, dy),
            Activation::Identity => dy.clone(),
        };
        let (b, t, c) = dz.dim();
        let dn = self.norm.backward(&cache.norm, &dz.into_shape_with_order((b * t, c)).expect("contiguous"));
        self.conv.backward(&cache.conv, &dn.into_shape_with_order((b, t, c)).expect("contiguous"))
    }
}

impl<F: Real> Module<F> for ConvBlock<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.norm.visit(&join(prefix, "bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        self.norm.visit_mut(&join(prefix, "bn"), f);
    }
}

fn accumulate<F: Real>(acc: &mut Array2<F>, part: Option<Array2<F>>) {
    if let Some(p) = part {
        *acc += &p;
    }
}

/// Convolutions and bidirectional LSTMs over `[mel | speaker embedding]`,
/// sampled every `downsample` frames into a narrow code sequence.
#[derive(Clone, Debug)]
pub struct ContentEncoder<F> {
    convs: Vec<ConvBlock<F>>,
    lstms: Vec<BiLstm<F>>,
    neck: usize,
    factor: usize,
    embed_dim: usize,
}

pub struct ContentCache<F> {
    convs: Vec<ConvBlockCache<F>>,
    lstms: Vec<BiLstmCache<F>>,
    frames: usize,
}

impl<F: Real> ContentEncoder<F> {
    pub fn new(cfg: &ConversionConfig, embed_dim: usize, rng: &mut impl Rng) -> Self {
        let mut convs = Vec::new();
        let mut c_in = N_MELS;
        for i in 0..cfg.encoder_convs {
            let stat = if i == 0 { embed_dim } else { 0 };
            convs.push(ConvBlock::new(c_in, stat, cfg.encoder_channels, cfg.kernel, Activation::Relu, rng));
            c_in = cfg.encoder_channels;
        }
        let lstms = (0..cfg.encoder_lstm_layers)
            .map(|i| {
                let (d_in, stat) = match (i, cfg.encoder_convs) {
                    (0, 0) => (N_MELS, embed_dim),
                    (0, _) => (cfg.encoder_channels, 0),
                    _ => (2 * cfg.neck, 0),
                };
                BiLstm::new(d_in, stat, cfg.neck, rng)
            })
            .collect();
        Self {
            convs,
            lstms,
            neck: cfg.neck,
            factor: cfg.downsample,
            embed_dim,
        }
    }

    /// `[B, T, 80]` and source embeddings `[B, E]` to codes `[B, T / f, 2 * neck]`:
    /// forward states at frames `f-1, 2f-1, ...`, backward states at `0, f, 2f, ...`.
    pub fn forward(&self, x: &Array3<F>, emb: &Array2<F>, train: bool) -> Result<(Array3<F>, ContentCache<F>)> {
        let (b, t, d) = x.dim();
        if d != N_MELS || t == 0 || t % self.factor != 0 {
            return Err(Error::Shape(format!(
                "content encoder needs [B, k*{}, {N_MELS}] input, got [{b}, {t}, {d}]",
                self.factor
            )));
        }
        if emb.dim() != (b, self.embed_dim) {
            return Err(Error::Shape(format!("speaker embedding batch {:?}, expected ({b}, {})", emb.dim(), self.embed_dim)));
        }
        let mut h = x.clone();
        let mut conv_caches = Vec::with_capacity(self.convs.len());
        for (i, block) in self.convs.iter().enumerate() {
            let (y, c) = block.forward(&h, (i == 0).then_some(emb), train);
            conv_caches.push(c);
            h = y;
        }
        let mut lstm_caches = Vec::with_capacity(self.lstms.len());
        for (i, lstm) in self.lstms.iter().enumerate() {
            let stat = (i == 0 && self.convs.is_empty()).then_some(emb);
            let (y, c) = lstm.forward(&h, stat);
            lstm_caches.push(c);
            h = y;
        }
        let n = t / self.factor;
        let mut codes = Array3::zeros((b, n, 2 * self.neck));
        for k in 0..n {
            codes
                .slice_mut(s![.., k, ..self.neck])
                .assign(&h.slice(s![.., (k + 1) * self.factor - 1, ..self.neck]));
            codes
                .slice_mut(s![.., k, self.neck..])
                .assign(&h.slice(s![.., k * self.factor, self.neck..]));
        }
        Ok((
            codes,
            ContentCache {
                convs: conv_caches,
                lstms: lstm_caches,
                frames: t,
            },
        ))
    }

    /// Returns gradients for the mel input and the embedding.
    pub fn backward(&mut self, cache: &ContentCache<F>, dcodes: &Array3<F>) -> (Array3<F>, Array2<F>) {
        let (b, n, _) = dcodes.dim();
        let mut dh = Array3::zeros((b, cache.frames, 2 * self.neck));
        for k in 0..n {
            dh.slice_mut(s![.., (k + 1) * self.factor - 1, ..self.neck])
                .assign(&dcodes.slice(s![.., k, ..self.neck]));
            dh.slice_mut(s![.., k * self.factor, self.neck..])
                .assign(&dcodes.slice(s![.., k, self.neck..]));
        }
        let mut demb = Array2::zeros((b, self.embed_dim));
        for (lstm, c) in self.lstms.iter_mut().zip(&cache.lstms).rev() {
            let (dx, ds) = lstm.backward(c, &dh);
            accumulate(&mut demb, ds);
            dh = dx;
        }
        for (block, c) in self.convs.iter_mut().zip(&cache.convs).rev() {
            let (dx, ds) = block.backward(c, &dh);
            accumulate(&mut demb, ds);
            dh = dx;
        }
        (dh, demb)
    }
}

impl<F: Real> Module<F> for ContentEncoder<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&join(prefix, &format!("conv{i}")), f);
        }
        for (i, l) in self.lstms.iter().enumerate() {
            l.visit(&join(prefix, &format!("lstm{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.visit_mut(&join(prefix, &format!("conv{i}")), f);
        }
        for (i, l) in self.lstms.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("lstm{i}")), f);
        }
    }
}

/// Upsampled codes plus target embedding to a mel spectrogram (before the postnet).
#[derive(Clone, Debug)]
pub struct Decoder<F> {
    pre: Lstm<F>,
    convs: Vec<ConvBlock<F>>,
    lstms: Vec<Lstm<F>>,
    out: Linear<F>,
    factor: usize,
    code_dim: usize,
    embed_dim: usize,
}

pub struct DecoderCache<F> {
    pre: LstmCache<F>,
    convs: Vec<ConvBlockCache<F>>,
    lstms: Vec<LstmCache<F>>,
    out: LinearCache<F>,
    dims: (usize, usize),
}

impl<F: Real> Decoder<F> {
    pub fn new(cfg: &ConversionConfig, embed_dim: usize, rng: &mut impl Rng) -> Self {
        let code_dim = 2 * cfg.neck;
        let pre = Lstm::new(code_dim, embed_dim, cfg.decoder_pre, false, rng);
        let mut c_in = cfg.decoder_pre;
        let convs = (0..cfg.decoder_convs)
            .map(|_| {
                let block = ConvBlock::new(c_in, 0, cfg.decoder_channels, cfg.kernel, Activation::Relu, rng);
                c_in = cfg.decoder_channels;
                block
            })
            .collect();
        let lstms = (0..cfg.decoder_lstm_layers)
            .map(|i| Lstm::new(if i == 0 { c_in } else { cfg.decoder_hidden }, 0, cfg.decoder_hidden, false, rng))
            .collect();
        Self {
            pre,
            convs,
            lstms,
            out: Linear::new(cfg.decoder_hidden, N_MELS, true, rng),
            factor: cfg.downsample,
            code_dim,
            embed_dim,
        }
    }

    /// Codes `[B, n, code]` and target embeddings `[B, E]` to `[B, n * f, 80]`.
    pub fn forward(&self, codes: &Array3<F>, emb: &Array2<F>, train: bool) -> Result<(Array3<F>, DecoderCache<F>)> {
        let (b, n, c) = codes.dim();
        if c != self.code_dim || n == 0 {
            return Err(Error::Shape(format!("decoder expects codes of width {}, got {c}", self.code_dim)));
        }
        if emb.dim() != (b, self.embed_dim) {
            return Err(Error::Shape(format!("target embedding batch {:?}, expected ({b}, {})", emb.dim(), self.embed_dim)));
        }
        let t = n * self.factor;
        let mut up = Array3::zeros((b, t, c));
        for k in 0..n {
            let code = codes.slice(s![.., k..k + 1, ..]);
            up.slice_mut(s![.., k * self.factor..(k + 1) * self.factor, ..])
                .assign(&code.broadcast((b, self.factor, c)).expect("broadcast"));
        }
        let (mut h, pre) = self.pre.forward(&up, Some(emb));
        let mut conv_caches = Vec::with_capacity(self.convs.len());
        for block in &self.convs {
            let (y, cc) = block.forward(&h, None, train);
            conv_caches.push(cc);
            h = y;
        }
        let mut lstm_caches = Vec::with_capacity(self.lstms.len());
        for l in &self.lstms {
            let (y, lc) = l.forward(&h, None);
            lstm_caches.push(lc);
            h = y;
        }
        let hid = h.dim().2;
        let (y, out) = self.out.forward(&h.into_shape_with_order((b * t, hid)).expect("contiguous"));
        Ok((
            y.into_shape_with_order((b, t, N_MELS)).expect("contiguous"),
            DecoderCache {
                pre,
                convs: conv_caches,
                lstms: lstm_caches,
                out,
                dims: (b, n),
            },
        ))
    }

    /// Returns gradients for the codes and the embedding.
    pub fn backward(&mut self, cache: &DecoderCache<F>, dy: &Array3<F>) -> (Array3<F>, Array2<F>) {
        let (b, n) = cache.dims;
        let t = n * self.factor;
        let dflat = dy.to_shape((b * t, N_MELS)).expect("contiguous").to_owned();
        let dh = self.out.backward(&cache.out, &dflat);
        let hid = dh.ncols();
        let mut dh = dh.into_shape_with_order((b, t, hid)).expect("contiguous");
        for (l, c) in self.lstms.iter_mut().zip(&cache.lstms).rev() {
            dh = l.backward(c, &dh).0;
        }
        for (block, c) in self.convs.iter_mut().zip(&cache.convs).rev() {
            dh = block.backward(c, &dh).0;
        }
        let (dup, demb) = self.pre.backward(&cache.pre, &dh);
        let mut dcodes = Array3::zeros((b, n, self.code_dim));
        for k in 0..n {
            dcodes
                .slice_mut(s![.., k, ..])
                .assign(&dup.slice(s![.., k * self.factor..(k + 1) * self.factor, ..]).sum_axis(Axis(1)));
        }
        (dcodes, demb.expect("decoder input LSTM takes the embedding"))
    }
}

impl<F: Real> Module<F> for Decoder<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.pre.visit(&join(prefix, "pre"), f);
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&join(prefix, &format!("conv{i}")), f);
        }
        for (i, l) in self.lstms.iter().enumerate() {
            l.visit(&join(prefix, &format!("lstm{i}")), f);
        }
        self.out.visit(&join(prefix, "out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.pre.visit_mut(&join(prefix, "pre"), f);
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.visit_mut(&join(prefix, &format!("conv{i}")), f);
        }
        for (i, l) in self.lstms.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("lstm{i}")), f);
        }
        self.out.visit_mut(&join(prefix, "out"), f);
    }
}

/// Residual convolution stack refining the decoder output.
#[derive(Clone, Debug)]
pub struct Postnet<F> {
    blocks: Vec<ConvBlock<F>>,
}

pub struct PostnetCache<F> {
    blocks: Vec<ConvBlockCache<F>>,
}

impl<F: Real> Postnet<F> {
    pub fn new(cfg: &ConversionConfig, rng: &mut impl Rng) -> Self {
        let n = cfg.postnet_layers;
        let blocks = (0..n)
            .map(|i| {
                let c_in = if i == 0 { N_MELS } else { cfg.postnet_channels };
                let (c_out, act) = if i + 1 == n {
                    (N_MELS, Activation::Identity)
                } else {
                    (cfg.postnet_channels, Activation::Tanh)
                };
                ConvBlock::new(c_in, 0, c_out, cfg.kernel, act, rng)
            })
            .collect();
        Self { blocks }
    }

    /// The residual to add to the decoder output.
    pub fn forward(&self, x: &Array3<F>, train: bool) -> (Array3<F>, PostnetCache<F>) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(&h, None, train);
            caches.push(c);
            h = y;
        }
        (h, PostnetCache { blocks: caches })
    }

    pub fn backward(&mut self, cache: &PostnetCache<F>, dy: &Array3<F>) -> Array3<F> {
        let mut dh = dy.clone();
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            dh = b.backward(c, &dh).0;
        }
        dh
    }
}

impl<F: Real> Module<F> for Postnet<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("block{i}")), f);
        }
    }
}

/// Decoder outputs before (`x1`) and after (`x2`) the postnet residual.
#[derive(Clone, Debug)]
pub struct Reconstruction<F> {
    pub codes: Array3<F>,
    pub x1: Array3<F>,
    pub x2: Array3<F>,
}

pub struct GeneratorCache<F> {
    pub content: ContentCache<F>,
    pub decoder: DecoderCache<F>,
    pub postnet: PostnetCache<F>,
}

#[derive(Clone, Debug)]
pub struct Generator<F = f32> {
    pub cfg: ConversionConfig,
    pub content: ContentEncoder<F>,
    pub decoder: Decoder<F>,
    pub postnet: Postnet<F>,
}

impl<F: Real> Generator<F> {
    pub fn new(cfg: &ConversionConfig, embed_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            content: ContentEncoder::new(cfg, embed_dim, rng),
            decoder: Decoder::new(cfg, embed_dim, rng),
            postnet: Postnet::new(cfg, rng),
            cfg: cfg.clone(),
        })
    }

    /// Encodes `x` with `source` and decodes with `target`.
    pub fn forward(
        &self,
        x: &Array3<F>,
        source: &Array2<F>,
        target: &Array2<F>,
        train: bool,
    ) -> Result<(Reconstruction<F>, GeneratorCache<F>)> {
        let (codes, content) = self.content.forward(x, source, train)?;
        let (x1, decoder) = self.decoder.forward(&codes, target, train)?;
        let (post, postnet) = self.postnet.forward(&x1, train);
        let x2 = &x1 + &post;
        Ok((Reconstruction { codes, x1, x2 }, GeneratorCache { content, decoder, postnet }))
    }

    /// Backpropagates gradients on `x1`, `x2` and the codes. Returns gradients
    /// for the input mel, the source embedding and the target embedding.
    pub fn backward(
        &mut self,
        cache: &GeneratorCache<F>,
        dx1: &Array3<F>,
        dx2: &Array3<F>,
        dcodes: Option<&Array3<F>>,
    ) -> (Array3<F>, Array2<F>, Array2<F>) {
        let dpost = self.postnet.backward(&cache.postnet, dx2);
        let dx1 = dx1 + dx2 + &dpost;
        let (mut dc, dtgt) = self.decoder.backward(&cache.decoder, &dx1);
        if let Some(extra) = dcodes {
            dc += extra;
        }
        let (dx, dsrc) = self.content.backward(&cache.content, &dc);
        (dx, dsrc, dtgt)
    }
}

impl<F: Real> Module<F> for Generator<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.content.visit(&join(prefix, "content"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
        self.postnet.visit(&join(prefix, "postnet"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.content.visit_mut(&join(prefix, "content"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
        self.postnet.visit_mut(&join(prefix, "postnet"), f);
    }
}

/// Forward and backward code halves of one utterance window.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentCode {
    pub forward: Array2<f64>,
    pub backward: Array2<f64>,
    pub downsample: usize,
}

impl ContentCode {
    /// Total numbers passed through the bottleneck.
    pub fn len(&self) -> usize {
        self.forward.len() + self.backward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn single<F: Real>(m: &Array2<f64>) -> Array3<F> {
    stack::<F>(std::slice::from_ref(m))
}

fn row<F: Real>(v: &ndarray::Array1<f64>) -> Array2<F> {
    v.mapv(F::of).insert_axis(Axis(0))
}

/// Codes of one normalized `[segment, 80]` window under `source`.
pub fn encode_content<F: Real>(g: &Generator<F>, window: &Array2<f64>, source: &SpeakerEmbedding) -> Result<ContentCode> {
    if window.dim() != (g.cfg.segment_frames, N_MELS) {
        return Err(Error::Shape(format!(
            "content window must be [{}, {N_MELS}], got {:?}",
            g.cfg.segment_frames,
            window.dim()
        )));
    }
    let (codes, _) = g.content.forward(&single::<F>(window), &row::<F>(&source.vector), false)?;
    let codes = codes.index_axis(Axis(0), 0).mapv(|v| v.f64());
    let neck = g.cfg.neck;
    Ok(ContentCode {
        forward: codes.slice(s![.., ..neck]).to_owned(),
        backward: codes.slice(s![.., neck..]).to_owned(),
        downsample: g.cfg.downsample,
    })
}

/// Decoder and postnet outputs for one utterance window.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderOutput {
    pub x_prime: Array2<f64>,
    pub x_dprime: Array2<f64>,
}

pub fn decode<F: Real>(g: &Generator<F>, code: &ContentCode, target: &SpeakerEmbedding) -> Result<DecoderOutput> {
    if code.forward.dim() != code.backward.dim() || code.forward.ncols() != g.cfg.neck || code.downsample != g.cfg.downsample {
        return Err(Error::Shape("content code halves do not match the decoder".into()));
    }
    let joined = ndarray::concatenate(Axis(1), &[code.forward.view(), code.backward.view()]).expect("same rows");
    let (x1, cache) = g.decoder.forward(&single::<F>(&joined), &row::<F>(&target.vector), false)?;
    let (post, _) = g.postnet.forward(&x1, false);
    drop(cache);
    let x2 = &x1 + &post;
    Ok(DecoderOutput {
        x_prime: x1.index_axis(Axis(0), 0).mapv(|v| v.f64()),
        x_dprime: x2.index_axis(Axis(0), 0).mapv(|v| v.f64()),
    })
}

/// Self-reconstruction of one window: the same embedding for content and target.
pub fn reconstruct<F: Real>(
    g: &Generator<F>,
    window: &Array2<f64>,
    speaker: &SpeakerEmbedding,
) -> Result<(DecoderOutput, ContentCode)> {
    let code = encode_content(g, window, speaker)?;
    Ok((decode(g, &code, speaker)?, code))
}

/// Everything needed for inference.
#[derive(Clone, Debug)]
pub struct VcSystem<F = f32> {
    pub features: FeatureConfig,
    pub generator: Generator<F>,
    pub speaker: SpeakerEncoder<F>,
    pub asv: Option<AsvModel<F>>,
}

/// Converted log-mel frames for the padded source length.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvertedMel {
    pub frames: Array2<f64>,
    /// Frames that correspond to real source frames.
    pub valid: usize,
}

impl ConvertedMel {
    pub fn trimmed(&self) -> Result<MelSpectrogram> {
        MelSpectrogram::new(self.frames.slice(s![..self.valid, ..]).to_owned(), 0)
    }
}

impl<F: Real> VcSystem<F> {
    pub fn embed(&self, mel: &MelSpectrogram) -> Result<SpeakerEmbedding> {
        speaker_embed(&self.speaker, mel, &self.features, self.asv.as_ref())
    }

    /// Converts `source` towards the speaker of `reference`. The source is cut
    /// into consecutive windows, the last one padded with the log floor; the
    /// output covers the padded length.
    pub fn convert(&self, source: &MelSpectrogram, reference: &MelSpectrogram) -> Result<ConvertedMel> {
        let src_emb = self.embed(source)?;
        let tgt_emb = self.embed(reference)?;
        self.convert_with(source, &src_emb, &tgt_emb)
    }

    /// Conversion with precomputed embeddings.
    pub fn convert_with(&self, source: &MelSpectrogram, src: &SpeakerEmbedding, tgt: &SpeakerEmbedding) -> Result<ConvertedMel> {
        let seg = self.generator.cfg.segment_frames;
        let t = source.n_frames();
        let n_win = t.div_ceil(seg);
        let mut padded = Array2::from_elem((n_win * seg, N_MELS), self.features.log_floor());
        padded.slice_mut(s![..t, ..]).assign(source.frames());
        let norm = normalize_mel(&padded, &self.features);
        let x = norm
            .into_shape_with_order((n_win, seg, N_MELS))
            .expect("contiguous")
            .mapv(F::of);
        let bcast = |e: &SpeakerEmbedding| {
            let r = row::<F>(&e.vector);
            r.broadcast((n_win, r.ncols())).expect("broadcast").to_owned()
        };
        let (out, _) = self.generator.forward(&x, &bcast(src), &bcast(tgt), false)?;
        let frames = out.x2.into_shape_with_order((n_win * seg, N_MELS)).expect("contiguous").mapv(|v| v.f64());
        Ok(ConvertedMel {
            frames: denormalize_mel(&frames, &self.features),
            valid: t,
        })
    }
}
