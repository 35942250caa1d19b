use ndarray::{Array, Array2, Axis, Dimension, Zip};

use super::Real;

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

pub fn relu<F: Real, D: Dimension>(x: &Array<F, D>) -> Array<F, D> {
    x.mapv(|v| v.max(F::zero()))
}

/// Gradient through a ReLU given its output.
pub fn relu_backward<F: Real, D: Dimension>(y: &Array<F, D>, dy: &Array<F, D>) -> Array<F, D> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(y).for_each(|d, &o| {
        if o <= F::zero() {
            *d = F::zero()
        }
    });
    dx
}

/// Gradient through a tanh given its output.
pub fn tanh_backward<F: Real, D: Dimension>(y: &Array<F, D>, dy: &Array<F, D>) -> Array<F, D> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(y).for_each(|d, &o| *d *= F::one() - o * o);
    dx
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows<F: Real>(x: &Array2<F>) -> Array2<F> {
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}
