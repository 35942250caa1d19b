use ndarray::{Array2, Axis};
use rand::Rng;

use super::{join, Module, Param, Real};

/// Affine map `y = x W + b` over row vectors.
#[derive(Clone, Debug)]
pub struct Linear<F> {
    pub weight: Param<F>,
    pub bias: Option<Param<F>>,
}

pub struct LinearCache<F> {
    input: Array2<F>,
}

impl<F: Real> Linear<F> {
    pub fn new(d_in: usize, d_out: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (d_in + d_out) as f64).sqrt();
        Self {
            weight: Param::uniform(d_in, d_out, bound, rng),
            bias: bias.then(|| Param::zeros(1, d_out)),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn apply(&self, x: &Array2<F>) -> Array2<F> {
        let y = x.dot(&self.weight.value);
        match &self.bias {
            Some(b) => y + &b.value,
            None => y,
        }
    }

    pub fn forward(&self, x: &Array2<F>) -> (Array2<F>, LinearCache<F>) {
        (self.apply(x), LinearCache { input: x.clone() })
    }

    pub fn backward(&mut self, cache: &LinearCache<F>, dy: &Array2<F>) -> Array2<F> {
        self.weight.grad += &cache.input.t().dot(dy);
        if let Some(b) = &mut self.bias {
            b.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        dy.dot(&self.weight.value.t())
    }
}

impl<F: Real> Module<F> for Linear<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}
