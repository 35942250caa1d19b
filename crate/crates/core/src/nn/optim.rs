use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Module, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with per-parameter moments kept in module visiting order.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    pub cfg: AdamConfig,
    step: u64,
    moments: Vec<(Array2<F>, Array2<F>)>,
}

impl<F: Real> Adam<F> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// First and second moments in trainable-parameter visiting order.
    pub fn moments(&self) -> &[(Array2<F>, Array2<F>)] {
        &self.moments
    }

    /// Rebuilds optimizer state saved with [`Adam::moments`] and [`Adam::steps`].
    pub fn restore(cfg: AdamConfig, step: u64, moments: Vec<(Array2<F>, Array2<F>)>) -> Self {
        Self { cfg, step, moments }
    }

    pub fn step(&mut self, module: &mut dyn Module<F>) {
        self.step += 1;
        let t = self.step as f64;
        let b1 = F::of(self.cfg.beta1);
        let b2 = F::of(self.cfg.beta2);
        let one = F::one();
        let c1 = F::of(1.0 - self.cfg.beta1.powf(t));
        let c2 = F::of(1.0 - self.cfg.beta2.powf(t));
        let lr = F::of(self.cfg.lr);
        let eps = F::of(self.cfg.eps);
        let moments = &mut self.moments;
        let mut idx = 0;
        module.visit_mut("", &mut |_, p| {
            if !p.trainable {
                return;
            }
            if moments.len() <= idx {
                moments.push((
                    Array2::zeros(p.value.raw_dim()),
                    Array2::zeros(p.value.raw_dim()),
                ));
            }
            let (m, v) = &mut moments[idx];
            Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let mh = *m / c1;
                    let vh = *v / c2;
                    *w -= lr * mh / (vh.sqrt() + eps);
                });
            idx += 1;
        });
    }
}

/// Scales all trainable gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<F: Real>(module: &mut dyn Module<F>, max_norm: f64) -> f64 {
    let norm = module.grad_norm();
    if max_norm > 0.0 && norm > max_norm {
        let scale = F::of(max_norm / (norm + 1e-12));
        module.visit_mut("", &mut |_, p| {
            if p.trainable {
                p.grad.mapv_inplace(|g| g * scale);
            }
        });
    }
    norm
}
