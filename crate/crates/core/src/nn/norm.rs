use ndarray::Array2;

use super::{join, Module, Param, Real};

const EPS: f64 = 1e-5;
const MOMENTUM: f64 = 0.1;

/// Batch normalization over the rows of a `[samples, channels]` matrix.
#[derive(Clone, Debug)]
pub struct BatchNorm<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Param<F>,
    pub running_var: Param<F>,
}

pub struct BatchNormCache<F> {
    xhat: Array2<F>,
    inv_std: Array2<F>,
    batch_stats: Option<(Array2<F>, Array2<F>)>,
}

impl<F: Real> BatchNorm<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Array2::ones((1, channels))),
            beta: Param::zeros(1, channels),
            running_mean: Param::buffer(Array2::zeros((1, channels))),
            running_var: Param::buffer(Array2::ones((1, channels))),
        }
    }

    /// Training mode normalizes with batch statistics, evaluation mode with running ones.
    pub fn forward(&self, x: &Array2<F>, train: bool) -> (Array2<F>, BatchNormCache<F>) {
        let (n, c) = x.dim();
        let x = x.as_standard_layout();
        let eps = F::of(EPS);
        let (mean, var, stats) = if train && n > 1 {
            let mut mean = Array2::<F>::zeros((1, c));
            let mut var = Array2::<F>::zeros((1, c));
            {
                let m = mean.as_slice_mut().expect("standard layout");
                for row in x.rows() {
                    for (a, &v) in m.iter_mut().zip(row.iter()) {
                        *a += v;
                    }
                }
                let inv_n = F::of(1.0 / n as f64);
                m.iter_mut().for_each(|a| *a *= inv_n);
                let vs = var.as_slice_mut().expect("standard layout");
                for row in x.rows() {
                    for ((a, &v), &mu) in vs.iter_mut().zip(row.iter()).zip(m.iter()) {
                        let d = v - mu;
                        *a += d * d;
                    }
                }
                vs.iter_mut().for_each(|a| *a *= inv_n);
            }
            (mean.clone(), var.clone(), Some((mean, var)))
        } else {
            (
                self.running_mean.value.clone(),
                self.running_var.value.clone(),
                None,
            )
        };
        let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
        let mut xhat = x.to_owned();
        let mut y = Array2::<F>::zeros((n, c));
        {
            let mu = mean.as_slice().expect("standard layout");
            let is = inv_std.as_slice().expect("standard layout");
            let g = self.gamma.value.as_slice().expect("standard layout");
            let b = self.beta.value.as_slice().expect("standard layout");
            let xs = xhat.as_slice_mut().expect("standard layout");
            let ys = y.as_slice_mut().expect("standard layout");
            for (xr, yr) in xs.chunks_exact_mut(c).zip(ys.chunks_exact_mut(c)) {
                for j in 0..c {
                    let h = (xr[j] - mu[j]) * is[j];
                    xr[j] = h;
                    yr[j] = h * g[j] + b[j];
                }
            }
        }
        (
            y,
            BatchNormCache {
                xhat,
                inv_std,
                batch_stats: stats,
            },
        )
    }

    pub fn backward(&mut self, cache: &BatchNormCache<F>, dy: &Array2<F>) -> Array2<F> {
        let (rows, c) = dy.dim();
        let dy = dy.as_standard_layout();
        let n = F::of(rows as f64);
        let dys = dy.as_slice().expect("standard layout");
        let xh = cache.xhat.as_slice().expect("standard layout");
        let mut sum_d = vec![F::zero(); c];
        let mut sum_dx = vec![F::zero(); c];
        for (dr, xr) in dys.chunks_exact(c).zip(xh.chunks_exact(c)) {
            for j in 0..c {
                sum_d[j] += dr[j];
                sum_dx[j] += dr[j] * xr[j];
            }
        }
        {
            let gg = self.gamma.grad.as_slice_mut().expect("standard layout");
            let bg = self.beta.grad.as_slice_mut().expect("standard layout");
            for j in 0..c {
                gg[j] += sum_dx[j];
                bg[j] += sum_d[j];
            }
        }
        let g = self.gamma.value.as_slice().expect("standard layout");
        let is = cache.inv_std.as_slice().expect("standard layout");
        let mut dx = Array2::<F>::zeros((rows, c));
        let dxs = dx.as_slice_mut().expect("standard layout");
        match &cache.batch_stats {
            Some((mean, var)) => {
                // sums of dxhat = gamma * dy
                for (dr, (xr, out)) in dys.chunks_exact(c).zip(xh.chunks_exact(c).zip(dxs.chunks_exact_mut(c))) {
                    for j in 0..c {
                        let dxhat = dr[j] * g[j];
                        out[j] = (dxhat * n - g[j] * sum_d[j] - xr[j] * g[j] * sum_dx[j]) * is[j] / n;
                    }
                }
                let m = F::of(MOMENTUM);
                let unbias = if rows > 1 { n / (n - F::one()) } else { F::one() };
                self.running_mean.value = &self.running_mean.value * (F::one() - m) + &(mean * m);
                self.running_var.value =
                    &self.running_var.value * (F::one() - m) + &(var * (m * unbias));
            }
            None => {
                for (dr, out) in dys.chunks_exact(c).zip(dxs.chunks_exact_mut(c)) {
                    for j in 0..c {
                        out[j] = dr[j] * g[j] * is[j];
                    }
                }
            }
        }
        dx
    }
}

impl<F: Real> Module<F> for BatchNorm<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}
