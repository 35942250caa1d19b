//! Central finite differences for verifying hand-written backward passes.

use ndarray::{Array, Dimension, Zip};

/// Central-difference gradient of `f` at `x`, one coordinate at a time.
pub fn numeric_gradient<D: Dimension>(
    x: &Array<f64, D>,
    step: f64,
    mut f: impl FnMut(&Array<f64, D>) -> f64,
) -> Array<f64, D> {
    let mut probe = x.clone();
    let mut grad = Array::zeros(x.raw_dim());
    let n = x.len();
    for i in 0..n {
        let orig = probe.as_slice_memory_order().expect("contiguous")[i];
        probe.as_slice_memory_order_mut().expect("contiguous")[i] = orig + step;
        let up = f(&probe);
        probe.as_slice_memory_order_mut().expect("contiguous")[i] = orig - step;
        let down = f(&probe);
        probe.as_slice_memory_order_mut().expect("contiguous")[i] = orig;
        grad.as_slice_memory_order_mut().expect("contiguous")[i] = (up - down) / (2.0 * step);
    }
    grad
}

/// Largest elementwise `|a - n| / max(|a| + |n|, 1e-8)`.
pub fn max_relative_error<D: Dimension>(analytic: &Array<f64, D>, numeric: &Array<f64, D>) -> f64 {
    max_relative_error_with_floor(analytic, numeric, 1e-8)
}

/// Like [`max_relative_error`] with a caller-chosen denominator floor.
pub fn max_relative_error_with_floor<D: Dimension>(analytic: &Array<f64, D>, numeric: &Array<f64, D>, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    let mut worst = 0.0f64;
    Zip::from(analytic).and(numeric).for_each(|&a, &n| {
        let rel = (a - n).abs() / (a.abs() + n.abs()).max(floor);
        worst = worst.max(rel);
    });
    worst
}
