use ndarray::{s, Array2, Array3, Array4, Axis};
use rand::Rng;

use super::{join, Module, Param, Real};

/// 1-D convolution over time with "same" zero padding, channels last.
///
/// Weights are stored in im2col layout `[kernel * c_in, c_out]` where row
/// `k * c_in + c` multiplies input channel `c` at offset `k - kernel / 2`.
/// Static channels (one vector per sequence, e.g. a speaker embedding) are
/// handled as if broadcast over time and zero-padded like ordinary channels.
#[derive(Clone, Debug)]
pub struct Conv1d<F> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    pub w_static: Option<Param<F>>,
    kernel: usize,
    c_in: usize,
}

pub struct Conv1dCache<F> {
    cols: Array2<F>,
    stat: Option<Array2<F>>,
    dims: (usize, usize),
}

impl<F: Real> Conv1d<F> {
    pub fn new(c_in: usize, c_static: usize, c_out: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        assert!(kernel % 2 == 1, "odd kernel required for same padding");
        let fan_in = (c_in + c_static) * kernel;
        let bound = (6.0 / (fan_in + c_out) as f64).sqrt();
        Self {
            weight: Param::uniform(kernel * c_in, c_out, bound, rng),
            bias: Param::zeros(1, c_out),
            w_static: (c_static > 0).then(|| Param::uniform(kernel * c_static, c_out, bound, rng)),
            kernel,
            c_in,
        }
    }

    pub fn c_out(&self) -> usize {
        self.weight.value.ncols()
    }

    fn static_part(&self, sv: &Array2<F>, ws: &Param<F>, t_len: usize) -> Array3<F> {
        let (b, c_s) = sv.dim();
        let pad = self.kernel / 2;
        let c_out = self.c_out();
        let mut out = Array3::zeros((b, t_len, c_out));
        for k in 0..self.kernel {
            let wk = ws.value.slice(s![k * c_s..(k + 1) * c_s, ..]);
            let v = sv.dot(&wk);
            // offset k contributes where 0 <= t + k - pad < t_len
            let lo = pad.saturating_sub(k);
            let hi = (t_len + pad).saturating_sub(k).min(t_len);
            if lo < hi {
                out.slice_mut(s![.., lo..hi, ..])
                    .zip_mut_with(&v.view().insert_axis(Axis(1)), |o, &a| *o += a);
            }
        }
        out
    }

    pub fn forward(&self, x: &Array3<F>, stat: Option<&Array2<F>>) -> (Array3<F>, Conv1dCache<F>) {
        let (b, t_len, c_in) = x.dim();
        assert_eq!(c_in, self.c_in, "conv1d input channels");
        let k = self.kernel;
        let pad = k / 2;
        let mut cols = Array2::<F>::zeros((b * t_len, k * c_in));
        for bi in 0..b {
            for kk in 0..k {
                let lo = pad.saturating_sub(kk);
                let hi = (t_len + pad).saturating_sub(kk).min(t_len);
                if lo >= hi {
                    continue;
                }
                cols.slice_mut(s![bi * t_len + lo..bi * t_len + hi, kk * c_in..(kk + 1) * c_in])
                    .assign(&x.slice(s![bi, lo + kk - pad..hi + kk - pad, ..]));
            }
        }
        let y = cols.dot(&self.weight.value) + &self.bias.value;
        let mut y = y
            .into_shape_with_order((b, t_len, self.c_out()))
            .expect("row-major");
        if let (Some(ws), Some(sv)) = (&self.w_static, stat) {
            y += &self.static_part(sv, ws, t_len);
        }
        let cache = Conv1dCache {
            cols,
            stat: stat.cloned(),
            dims: (b, t_len),
        };
        (y, cache)
    }

    pub fn backward(&mut self, cache: &Conv1dCache<F>, dy: &Array3<F>) -> (Array3<F>, Option<Array2<F>>) {
        let (b, t_len) = cache.dims;
        let k = self.kernel;
        let pad = k / 2;
        let c_in = self.c_in;
        let dflat = dy
            .to_shape((b * t_len, self.c_out()))
            .expect("contiguous")
            .to_owned();
        self.weight.grad += &cache.cols.t().dot(&dflat);
        self.bias.grad += &dflat.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dcols = dflat.dot(&self.weight.value.t());
        let mut dx = Array3::<F>::zeros((b, t_len, c_in));
        for bi in 0..b {
            for kk in 0..k {
                let lo = pad.saturating_sub(kk);
                let hi = (t_len + pad).saturating_sub(kk).min(t_len);
                if lo >= hi {
                    continue;
                }
                let src = dcols.slice(s![bi * t_len + lo..bi * t_len + hi, kk * c_in..(kk + 1) * c_in]);
                dx.slice_mut(s![bi, lo + kk - pad..hi + kk - pad, ..])
                    .zip_mut_with(&src, |d, &g| *d += g);
            }
        }
        let dstat = match (&mut self.w_static, &cache.stat) {
            (Some(ws), Some(sv)) => {
                let c_s = sv.ncols();
                let mut ds = Array2::<F>::zeros(sv.raw_dim());
                for kk in 0..k {
                    let lo = pad.saturating_sub(kk);
                    let hi = (t_len + pad).saturating_sub(kk).min(t_len);
                    if lo >= hi {
                        continue;
                    }
                    let dv = dy.slice(s![.., lo..hi, ..]).sum_axis(Axis(1));
                    let rows = s![kk * c_s..(kk + 1) * c_s, ..];
                    let g = sv.t().dot(&dv);
                    ws.grad.slice_mut(rows).zip_mut_with(&g, |a, &v| *a += v);
                    ds += &dv.dot(&ws.value.slice(rows).t());
                }
                Some(ds)
            }
            _ => None,
        };
        (dx, dstat)
    }
}

impl<F: Real> Module<F> for Conv1d<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
        if let Some(ws) = &self.w_static {
            f(&join(prefix, "w_static"), ws);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
        if let Some(ws) = &mut self.w_static {
            f(&join(prefix, "w_static"), ws);
        }
    }
}

/// 2-D convolution on channels-last maps `[batch, height, width, channels]`.
#[derive(Clone, Debug)]
pub struct Conv2d<F> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    kernel: usize,
    stride: usize,
    pad: usize,
    c_in: usize,
}

pub struct Conv2dCache<F> {
    cols: Array2<F>,
    in_dims: (usize, usize, usize, usize),
    out_hw: (usize, usize),
}

impl<F: Real> Conv2d<F> {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, stride: usize, pad: usize, rng: &mut impl Rng) -> Self {
        let fan_in = c_in * kernel * kernel;
        let bound = (6.0 / (fan_in + c_out) as f64).sqrt();
        Self {
            weight: Param::uniform(kernel * kernel * c_in, c_out, bound, rng),
            bias: Param::zeros(1, c_out),
            kernel,
            stride,
            pad,
            c_in,
        }
    }

    pub fn c_out(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn out_len(&self, n: usize) -> usize {
        (n + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Input position for output index `o` and kernel tap `k`, if inside the map.
    #[inline]
    fn src(&self, o: usize, k: usize, n: usize) -> Option<usize> {
        let p = (o * self.stride + k) as isize - self.pad as isize;
        (p >= 0 && (p as usize) < n).then_some(p as usize)
    }

    pub fn forward(&self, x: &Array4<F>) -> (Array4<F>, Conv2dCache<F>) {
        let (b, hh, ww, c) = x.dim();
        assert_eq!(c, self.c_in, "conv2d input channels");
        let (oh, ow) = (self.out_len(hh), self.out_len(ww));
        let k = self.kernel;
        let mut cols = Array2::<F>::zeros((b * oh * ow, k * k * c));
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let width = k * k * c;
        let cs = cols.as_slice_mut().expect("standard layout");
        for bi in 0..b {
            for i in 0..oh {
                for ki in 0..k {
                    let Some(si) = self.src(i, ki, hh) else { continue };
                    let src_row = &xs[((bi * hh + si) * ww) * c..((bi * hh + si + 1) * ww) * c];
                    for j in 0..ow {
                        let dst = &mut cs[((bi * oh + i) * ow + j) * width..][..width];
                        for kj in 0..k {
                            let Some(sj) = self.src(j, kj, ww) else { continue };
                            let off = (ki * k + kj) * c;
                            dst[off..off + c].copy_from_slice(&src_row[sj * c..(sj + 1) * c]);
                        }
                    }
                }
            }
        }
        let y = cols.dot(&self.weight.value) + &self.bias.value;
        let y = y
            .into_shape_with_order((b, oh, ow, self.c_out()))
            .expect("row-major");
        let cache = Conv2dCache {
            cols,
            in_dims: (b, hh, ww, c),
            out_hw: (oh, ow),
        };
        (y, cache)
    }

    pub fn backward(&mut self, cache: &Conv2dCache<F>, dy: &Array4<F>) -> Array4<F> {
        let (b, hh, ww, c) = cache.in_dims;
        let (oh, ow) = cache.out_hw;
        let k = self.kernel;
        let dflat = dy
            .to_shape((b * oh * ow, self.c_out()))
            .expect("contiguous")
            .to_owned();
        self.weight.grad += &cache.cols.t().dot(&dflat);
        self.bias.grad += &dflat.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dcols = dflat.dot(&self.weight.value.t());
        let mut dx = Array4::<F>::zeros((b, hh, ww, c));
        let width = k * k * c;
        let dcs = dcols.as_slice().expect("standard layout");
        let dxs = dx.as_slice_mut().expect("standard layout");
        for bi in 0..b {
            for i in 0..oh {
                for ki in 0..k {
                    let Some(si) = self.src(i, ki, hh) else { continue };
                    let row_start = ((bi * hh + si) * ww) * c;
                    for j in 0..ow {
                        let src = &dcs[((bi * oh + i) * ow + j) * width..][..width];
                        for kj in 0..k {
                            let Some(sj) = self.src(j, kj, ww) else { continue };
                            let off = (ki * k + kj) * c;
                            let dst = &mut dxs[row_start + sj * c..row_start + (sj + 1) * c];
                            for (d, &g) in dst.iter_mut().zip(&src[off..off + c]) {
                                *d += g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

impl<F: Real> Module<F> for Conv2d<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
