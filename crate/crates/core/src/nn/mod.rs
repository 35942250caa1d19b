//! Minimal layer library with hand-written backward passes.
//!
//! Every layer follows the same protocol: `forward(&self, ..)` returns the
//! output together with a cache, and `backward(&mut self, &cache, grad_out)`
//! accumulates parameter gradients and returns the gradient for the inputs.
//! A layer may be applied several times before any backward call; each use
//! owns its cache. Batch-norm running statistics are folded in during
//! `backward`, so inference never needs `&mut`.

mod act;
mod conv;
mod linear;
mod norm;
mod optim;
mod recurrent;

pub mod check;

pub use act::{relu, relu_backward, sigmoid, softmax_rows, tanh_backward};
pub use conv::{Conv1d, Conv1dCache, Conv2d, Conv2dCache};
pub use linear::{Linear, LinearCache};
pub use norm::{BatchNorm, BatchNormCache};
pub use optim::{clip_grad_norm, Adam, AdamConfig};
pub use recurrent::{BiLstm, BiLstmCache, Gru, GruCache, Lstm, LstmCache};

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array2, LinalgScalar, ScalarOperand};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// Floating-point element type for network tensors.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + std::iter::Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// A named tensor with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Param<F> {
    pub value: Array2<F>,
    pub grad: Array2<F>,
    /// Buffers such as running statistics are stored and checkpointed but never optimized.
    pub trainable: bool,
}

impl<F: Real> Param<F> {
    pub fn new(value: Array2<F>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(value: Array2<F>) -> Self {
        Self {
            trainable: false,
            ..Self::new(value)
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((rows, cols)))
    }

    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Self::new(Array2::from_shape_fn((rows, cols), |_| {
            F::of(dist.sample(rng))
        }))
    }

    pub fn normal(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Self {
        let dist = Normal::new(0.0, std).expect("finite std");
        Self::new(Array2::from_shape_fn((rows, cols), |_| {
            F::of(dist.sample(rng))
        }))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns parameters. Visiting order is the checkpoint and optimizer order.
pub trait Module<F: Real> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.grad.fill(F::zero()));
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.trainable {
                n += p.len()
            }
        });
        n
    }

    fn grad_norm(&self) -> f64 {
        let mut sq = 0.0;
        self.visit("", &mut |_, p| {
            if p.trainable {
                sq += p.grad.iter().map(|g| g.f64() * g.f64()).sum::<f64>();
            }
        });
        sq.sqrt()
    }
}

/// Joins a parent prefix and a child name with a dot.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Converts a matrix between element types.
pub fn cast<A: Real, B: Real>(a: &Array2<A>) -> Array2<B> {
    a.mapv(|v| B::of(v.f64()))
}
