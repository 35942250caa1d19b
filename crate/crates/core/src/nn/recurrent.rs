use ndarray::{s, Array2, Array3, Axis};
use rand::Rng;

use super::act::sigmoid;
use super::{join, Module, Param, Real};

fn flatten<F: Real>(x: &Array3<F>) -> Array2<F> {
    let (b, t, d) = x.dim();
    x.to_shape((b * t, d)).expect("contiguous").to_owned()
}

fn unflatten<F: Real>(x: Array2<F>, b: usize, t: usize) -> Array3<F> {
    let d = x.ncols();
    x.into_shape_with_order((b, t, d)).expect("row-major")
}

/// Time indices in processing order.
fn order(t_len: usize, reverse: bool) -> impl DoubleEndedIterator<Item = usize> {
    (0..t_len).map(move |k| if reverse { t_len - 1 - k } else { k })
}

/// Hidden states shifted by one processing step, zeros at the first step.
fn shifted<F: Real>(seq: &Array3<F>, reverse: bool) -> Array3<F> {
    let (b, t_len, h) = seq.dim();
    let mut prev = Array3::zeros((b, t_len, h));
    if t_len > 1 {
        if reverse {
            prev.slice_mut(s![.., ..t_len - 1, ..])
                .assign(&seq.slice(s![.., 1.., ..]));
        } else {
            prev.slice_mut(s![.., 1.., ..])
                .assign(&seq.slice(s![.., ..t_len - 1, ..]));
        }
    }
    prev
}

/// Single-direction LSTM with gate order (input, forget, cell, output).
///
/// An optional static input (one vector per sequence) is treated as if it
/// were concatenated to every frame, without materializing the concatenation.
#[derive(Clone, Debug)]
pub struct Lstm<F> {
    pub w_x: Param<F>,
    pub w_h: Param<F>,
    pub bias: Param<F>,
    pub w_s: Option<Param<F>>,
    hidden: usize,
    reverse: bool,
}

pub struct LstmCache<F> {
    x: Array2<F>,
    stat: Option<Array2<F>>,
    /// Time-major `[time, batch, 4 * hidden]` activated gates.
    gates: Array3<F>,
    /// Time-major `[time, batch, hidden]`.
    cells: Array3<F>,
    tanh_c: Array3<F>,
    hs: Array3<F>,
}

/// `[batch, time, d]` to time-major `[time, batch, d]`, contiguous.
fn time_major<F: Real>(x: &Array3<F>) -> Array3<F> {
    x.view().permuted_axes([1, 0, 2]).as_standard_layout().into_owned()
}

fn batch_major<F: Real>(x: &Array3<F>) -> Array3<F> {
    time_major(x)
}

/// `out += a · w` for a `[rows, k]` slice `a` and a row-major `[k, n]` slice `w`.
fn small_matmul_acc<F: Real>(a: &[F], w: &[F], out: &mut [F], k: usize, n: usize) {
    for (ar, or) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (kk, &av) in ar.iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let wr = &w[kk * n..(kk + 1) * n];
            for (o, &wv) in or.iter_mut().zip(wr) {
                *o += av * wv;
            }
        }
    }
}

impl<F: Real> Lstm<F> {
    pub fn new(d_in: usize, d_static: usize, hidden: usize, reverse: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut bias = Param::zeros(1, 4 * hidden);
        bias.value
            .slice_mut(s![.., hidden..2 * hidden])
            .fill(F::one());
        Self {
            w_x: Param::uniform(d_in, 4 * hidden, bound, rng),
            w_h: Param::uniform(hidden, 4 * hidden, bound, rng),
            bias,
            w_s: (d_static > 0).then(|| Param::uniform(d_static, 4 * hidden, bound, rng)),
            hidden,
            reverse,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Runs the sequence `x` of shape `[batch, time, d_in]`; returns `[batch, time, hidden]`.
    pub fn forward(&self, x: &Array3<F>, stat: Option<&Array2<F>>) -> (Array3<F>, LstmCache<F>) {
        let (b, t_len, _) = x.dim();
        let h = self.hidden;
        let xf = flatten(x);
        let pre = xf.dot(&self.w_x.value) + &self.bias.value;
        let mut pre = time_major(&unflatten(pre, b, t_len));
        if let (Some(ws), Some(sv)) = (&self.w_s, stat) {
            let sw = sv.dot(&ws.value);
            pre += &sw.insert_axis(Axis(0));
        }

        let mut gates = pre;
        let mut cells = Array3::<F>::zeros((t_len, b, h));
        let mut tanh_c = Array3::<F>::zeros((t_len, b, h));
        let mut hs = Array3::<F>::zeros((t_len, b, h));
        let w_h = self.w_h.value.as_standard_layout();
        let w_h = w_h.as_slice().expect("standard layout");
        let mut h_prev = vec![F::zero(); b * h];
        let mut c_prev = vec![F::zero(); b * h];
        {
            let gs = gates.as_slice_mut().expect("standard layout");
            let cs = cells.as_slice_mut().expect("standard layout");
            let ts = tanh_c.as_slice_mut().expect("standard layout");
            let os = hs.as_slice_mut().expect("standard layout");
            for t in order(t_len, self.reverse) {
                let g = &mut gs[t * b * 4 * h..(t + 1) * b * 4 * h];
                small_matmul_acc(&h_prev, w_h, g, h, 4 * h);
                let cn = &mut cs[t * b * h..(t + 1) * b * h];
                let tn = &mut ts[t * b * h..(t + 1) * b * h];
                let hn = &mut os[t * b * h..(t + 1) * b * h];
                for bi in 0..b {
                    let row = &mut g[bi * 4 * h..(bi + 1) * 4 * h];
                    for j in 0..h {
                        let i = sigmoid(row[j]);
                        let f = sigmoid(row[h + j]);
                        let gg = row[2 * h + j].tanh();
                        let o = sigmoid(row[3 * h + j]);
                        row[j] = i;
                        row[h + j] = f;
                        row[2 * h + j] = gg;
                        row[3 * h + j] = o;
                        let k = bi * h + j;
                        let c = f * c_prev[k] + i * gg;
                        let tc = c.tanh();
                        cn[k] = c;
                        tn[k] = tc;
                        hn[k] = o * tc;
                    }
                }
                h_prev.copy_from_slice(hn);
                c_prev.copy_from_slice(cn);
            }
        }

        let out = batch_major(&hs);
        let cache = LstmCache {
            x: xf,
            stat: stat.cloned(),
            gates,
            cells,
            tanh_c,
            hs,
        };
        (out, cache)
    }

    /// Returns gradients for the sequence input and, if present, the static input.
    pub fn backward(&mut self, cache: &LstmCache<F>, dout: &Array3<F>) -> (Array3<F>, Option<Array2<F>>) {
        let (b, t_len, _) = dout.dim();
        let h = self.hidden;
        let dout_tm = time_major(dout);
        let d_tm = dout_tm.as_slice().expect("standard layout");
        let w_ht = self.w_h.value.t().as_standard_layout().into_owned();
        let w_ht = w_ht.as_slice().expect("standard layout");
        let gs = cache.gates.as_slice().expect("standard layout");
        let cs = cache.cells.as_slice().expect("standard layout");
        let ts = cache.tanh_c.as_slice().expect("standard layout");
        let zeros = vec![F::zero(); b * h];
        let mut dpre = Array3::<F>::zeros((t_len, b, 4 * h));
        let mut dh_next = vec![F::zero(); b * h];
        let mut dc_next = vec![F::zero(); b * h];
        {
            let dps = dpre.as_slice_mut().expect("standard layout");
            for t in order(t_len, self.reverse).rev() {
                let first = if self.reverse { t + 1 == t_len } else { t == 0 };
                let prev_t = if self.reverse { t + 1 } else { t.wrapping_sub(1) };
                let cp = if first { &zeros[..] } else { &cs[prev_t * b * h..(prev_t + 1) * b * h] };
                let g = &gs[t * b * 4 * h..(t + 1) * b * 4 * h];
                let tc = &ts[t * b * h..(t + 1) * b * h];
                let dh_t = &d_tm[t * b * h..(t + 1) * b * h];
                let dg = &mut dps[t * b * 4 * h..(t + 1) * b * 4 * h];
                for bi in 0..b {
                    let gr = &g[bi * 4 * h..(bi + 1) * 4 * h];
                    let dr = &mut dg[bi * 4 * h..(bi + 1) * 4 * h];
                    for j in 0..h {
                        let k = bi * h + j;
                        let (i, f, gg, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                        let tcv = tc[k];
                        let dh = dh_t[k] + dh_next[k];
                        let dc = dc_next[k] + dh * o * (F::one() - tcv * tcv);
                        dr[j] = dc * gg * i * (F::one() - i);
                        dr[h + j] = dc * cp[k] * f * (F::one() - f);
                        dr[2 * h + j] = dc * i * (F::one() - gg * gg);
                        dr[3 * h + j] = dh * tcv * o * (F::one() - o);
                        dc_next[k] = dc * f;
                    }
                }
                dh_next.iter_mut().for_each(|v| *v = F::zero());
                small_matmul_acc(dg, w_ht, &mut dh_next, 4 * h, h);
            }
        }

        let dpre = batch_major(&dpre);
        let h_prev = flatten(&shifted(&batch_major(&cache.hs), self.reverse));
        let dflat = flatten(&dpre);
        self.w_h.grad += &h_prev.t().dot(&dflat);
        self.w_x.grad += &cache.x.t().dot(&dflat);
        self.bias.grad += &dflat.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dx = unflatten(dflat.dot(&self.w_x.value.t()), b, t_len);

        let dstat = match (&mut self.w_s, &cache.stat) {
            (Some(ws), Some(sv)) => {
                let dsum = dpre.sum_axis(Axis(1));
                ws.grad += &sv.t().dot(&dsum);
                Some(dsum.dot(&ws.value.t()))
            }
            _ => None,
        };
        (dx, dstat)
    }
}

impl<F: Real> Module<F> for Lstm<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        f(&join(prefix, "w_x"), &self.w_x);
        f(&join(prefix, "w_h"), &self.w_h);
        f(&join(prefix, "bias"), &self.bias);
        if let Some(ws) = &self.w_s {
            f(&join(prefix, "w_s"), ws);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        f(&join(prefix, "w_x"), &mut self.w_x);
        f(&join(prefix, "w_h"), &mut self.w_h);
        f(&join(prefix, "bias"), &mut self.bias);
        if let Some(ws) = &mut self.w_s {
            f(&join(prefix, "w_s"), ws);
        }
    }
}

/// Forward and backward LSTMs over the same input; outputs are concatenated
/// as `[forward | backward]` along the feature axis.
#[derive(Clone, Debug)]
pub struct BiLstm<F> {
    pub fwd: Lstm<F>,
    pub bwd: Lstm<F>,
}

pub struct BiLstmCache<F> {
    fwd: LstmCache<F>,
    bwd: LstmCache<F>,
}

impl<F: Real> BiLstm<F> {
    pub fn new(d_in: usize, d_static: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            fwd: Lstm::new(d_in, d_static, hidden, false, rng),
            bwd: Lstm::new(d_in, d_static, hidden, true, rng),
        }
    }

    pub fn forward(&self, x: &Array3<F>, stat: Option<&Array2<F>>) -> (Array3<F>, BiLstmCache<F>) {
        let (yf, cf) = self.fwd.forward(x, stat);
        let (yb, cb) = self.bwd.forward(x, stat);
        let y = ndarray::concatenate(Axis(2), &[yf.view(), yb.view()]).expect("same batch and time");
        (y, BiLstmCache { fwd: cf, bwd: cb })
    }

    pub fn backward(&mut self, cache: &BiLstmCache<F>, dy: &Array3<F>) -> (Array3<F>, Option<Array2<F>>) {
        let h = self.fwd.hidden();
        let dyf = dy.slice(s![.., .., ..h]).to_owned();
        let dyb = dy.slice(s![.., .., h..]).to_owned();
        let (mut dx, dsf) = self.fwd.backward(&cache.fwd, &dyf);
        let (dxb, dsb) = self.bwd.backward(&cache.bwd, &dyb);
        dx += &dxb;
        let ds = match (dsf, dsb) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        (dx, ds)
    }
}

impl<F: Real> Module<F> for BiLstm<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.fwd.visit(&join(prefix, "fwd"), f);
        self.bwd.visit(&join(prefix, "bwd"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.fwd.visit_mut(&join(prefix, "fwd"), f);
        self.bwd.visit_mut(&join(prefix, "bwd"), f);
    }
}

/// GRU with gate order (reset, update, new) and separate input/hidden biases:
/// `n = tanh(x W_n + b_xn + r * (h W_hn + b_hn))`, `h' = (1 - z) n + z h`.
#[derive(Clone, Debug)]
pub struct Gru<F> {
    pub w_x: Param<F>,
    pub w_h: Param<F>,
    pub b_x: Param<F>,
    pub b_h: Param<F>,
    hidden: usize,
}

pub struct GruCache<F> {
    x: Array2<F>,
    r: Array3<F>,
    z: Array3<F>,
    n: Array3<F>,
    hn: Array3<F>,
    out: Array3<F>,
}

impl<F: Real> Gru<F> {
    pub fn new(d_in: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_x: Param::uniform(d_in, 3 * hidden, bound, rng),
            w_h: Param::uniform(hidden, 3 * hidden, bound, rng),
            b_x: Param::zeros(1, 3 * hidden),
            b_h: Param::zeros(1, 3 * hidden),
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Returns every hidden state, `[batch, time, hidden]`.
    pub fn forward(&self, x: &Array3<F>) -> (Array3<F>, GruCache<F>) {
        let (b, t_len, _) = x.dim();
        let h = self.hidden;
        let xf = flatten(x);
        let pre = unflatten(xf.dot(&self.w_x.value) + &self.b_x.value, b, t_len);
        let mut r_all = Array3::zeros((b, t_len, h));
        let mut z_all = Array3::zeros((b, t_len, h));
        let mut n_all = Array3::zeros((b, t_len, h));
        let mut hn_all = Array3::zeros((b, t_len, h));
        let mut out = Array3::zeros((b, t_len, h));
        let mut h_prev = Array2::<F>::zeros((b, h));
        for t in 0..t_len {
            let gh = h_prev.dot(&self.w_h.value) + &self.b_h.value;
            let px = pre.slice(s![.., t, ..]);
            let mut h_new = Array2::<F>::zeros((b, h));
            for bi in 0..b {
                for j in 0..h {
                    let r = sigmoid(px[[bi, j]] + gh[[bi, j]]);
                    let z = sigmoid(px[[bi, h + j]] + gh[[bi, h + j]]);
                    let hn = gh[[bi, 2 * h + j]];
                    let n = (px[[bi, 2 * h + j]] + r * hn).tanh();
                    r_all[[bi, t, j]] = r;
                    z_all[[bi, t, j]] = z;
                    n_all[[bi, t, j]] = n;
                    hn_all[[bi, t, j]] = hn;
                    h_new[[bi, j]] = (F::one() - z) * n + z * h_prev[[bi, j]];
                }
            }
            out.slice_mut(s![.., t, ..]).assign(&h_new);
            h_prev = h_new;
        }
        let cache = GruCache {
            x: xf,
            r: r_all,
            z: z_all,
            n: n_all,
            hn: hn_all,
            out: out.clone(),
        };
        (out, cache)
    }

    pub fn backward(&mut self, cache: &GruCache<F>, dout: &Array3<F>) -> Array3<F> {
        let (b, t_len, _) = dout.dim();
        let h = self.hidden;
        let h_prev_all = shifted(&cache.out, false);
        let mut dgx = Array3::<F>::zeros((b, t_len, 3 * h));
        let mut dgh = Array3::<F>::zeros((b, t_len, 3 * h));
        let mut dh_next = Array2::<F>::zeros((b, h));
        let w_ht = self.w_h.value.t().as_standard_layout().into_owned();
        for t in (0..t_len).rev() {
            let mut dh_prev = Array2::<F>::zeros((b, h));
            let mut dgh_t = Array2::<F>::zeros((b, 3 * h));
            for bi in 0..b {
                for j in 0..h {
                    let r = cache.r[[bi, t, j]];
                    let z = cache.z[[bi, t, j]];
                    let n = cache.n[[bi, t, j]];
                    let hn = cache.hn[[bi, t, j]];
                    let hp = h_prev_all[[bi, t, j]];
                    let dh = dout[[bi, t, j]] + dh_next[[bi, j]];
                    let dn = dh * (F::one() - z) * (F::one() - n * n);
                    let dz = dh * (hp - n) * z * (F::one() - z);
                    let dr = dn * hn * r * (F::one() - r);
                    dgx[[bi, t, j]] = dr;
                    dgx[[bi, t, h + j]] = dz;
                    dgx[[bi, t, 2 * h + j]] = dn;
                    dgh_t[[bi, j]] = dr;
                    dgh_t[[bi, h + j]] = dz;
                    dgh_t[[bi, 2 * h + j]] = dn * r;
                    dh_prev[[bi, j]] = dh * z;
                }
            }
            dh_prev += &dgh_t.dot(&w_ht);
            dgh.slice_mut(s![.., t, ..]).assign(&dgh_t);
            dh_next = dh_prev;
        }
        let dgx = flatten(&dgx);
        let dgh = flatten(&dgh);
        let hp = flatten(&h_prev_all);
        self.w_x.grad += &cache.x.t().dot(&dgx);
        self.b_x.grad += &dgx.sum_axis(Axis(0)).insert_axis(Axis(0));
        self.w_h.grad += &hp.t().dot(&dgh);
        self.b_h.grad += &dgh.sum_axis(Axis(0)).insert_axis(Axis(0));
        unflatten(dgx.dot(&self.w_x.value.t()), b, t_len)
    }
}

impl<F: Real> Module<F> for Gru<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        f(&join(prefix, "w_x"), &self.w_x);
        f(&join(prefix, "w_h"), &self.w_h);
        f(&join(prefix, "b_x"), &self.b_x);
        f(&join(prefix, "b_h"), &self.b_h);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        f(&join(prefix, "w_x"), &mut self.w_x);
        f(&join(prefix, "w_h"), &mut self.w_h);
        f(&join(prefix, "b_x"), &mut self.b_x);
        f(&join(prefix, "b_h"), &mut self.b_h);
    }
}
