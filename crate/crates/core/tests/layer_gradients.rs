//! Finite-difference checks for every layer's backward pass.

use dgcvc::nn::check::{max_relative_error, numeric_gradient};
use dgcvc::nn::{BatchNorm, BiLstm, Conv1d, Conv2d, Gru, Linear, Lstm, Module, Param};
use ndarray::{Array, Array2, Array3, Array4, Dimension};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn randn<D: Dimension>(shape: D, rng: &mut ChaCha8Rng) -> Array<f64, D> {
    let n = Normal::new(0.0, 1.0).unwrap();
    Array::from_shape_fn(shape, |_| n.sample(rng))
}

fn dot<D: Dimension>(a: &Array<f64, D>, b: &Array<f64, D>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Checks each named parameter of `module` against finite differences of `loss`.
fn check_params<M: Module<f64> + Clone>(module: &M, analytic: &M, loss: impl Fn(&M) -> f64) {
    let mut names = Vec::new();
    module.visit("", &mut |n, p| {
        if p.trainable {
            names.push(n.to_string())
        }
    });
    for name in names {
        let mut value = None;
        let mut grad = None;
        module.visit("", &mut |n, p| {
            if n == name {
                value = Some(p.value.clone())
            }
        });
        analytic.visit("", &mut |n, p| {
            if n == name {
                grad = Some(p.grad.clone())
            }
        });
        let value: Array2<f64> = value.unwrap();
        let numeric = numeric_gradient(&value, STEP, |v| {
            let mut m = module.clone();
            m.visit_mut("", &mut |n, p: &mut Param<f64>| {
                if n == name {
                    p.value = v.clone()
                }
            });
            loss(&m)
        });
        let err = max_relative_error(&grad.unwrap(), &numeric);
        assert!(err < TOL, "{name}: relative error {err}");
    }
}

#[test]
fn linear_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layer = Linear::<f64>::new(4, 3, true, &mut rng);
    let x: Array2<f64> = randn(ndarray::Dim([5, 4]), &mut rng);
    let r: Array2<f64> = randn(ndarray::Dim([5, 3]), &mut rng);
    let mut trained = layer.clone();
    let (_, cache) = trained.forward(&x);
    let dx = trained.backward(&cache, &r);
    let num = numeric_gradient(&x, STEP, |xv| dot(&layer.apply(xv), &r));
    assert!(max_relative_error(&dx, &num) < TOL);
    check_params(&layer, &trained, |m| dot(&m.apply(&x), &r));
}

#[test]
fn lstm_gradients_with_static_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for reverse in [false, true] {
        let layer = Lstm::<f64>::new(3, 2, 4, reverse, &mut rng);
        let x: Array3<f64> = randn(ndarray::Dim([2, 5, 3]), &mut rng);
        let s: Array2<f64> = randn(ndarray::Dim([2, 2]), &mut rng);
        let r: Array3<f64> = randn(ndarray::Dim([2, 5, 4]), &mut rng);
        let mut trained = layer.clone();
        let (_, cache) = trained.forward(&x, Some(&s));
        let (dx, ds) = trained.backward(&cache, &r);
        let num = numeric_gradient(&x, STEP, |xv| dot(&layer.forward(xv, Some(&s)).0, &r));
        assert!(max_relative_error(&dx, &num) < TOL);
        let num_s = numeric_gradient(&s, STEP, |sv| dot(&layer.forward(&x, Some(sv)).0, &r));
        assert!(max_relative_error(&ds.unwrap(), &num_s) < TOL);
        check_params(&layer, &trained, |m| dot(&m.forward(&x, Some(&s)).0, &r));
    }
}

#[test]
fn bilstm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let layer = BiLstm::<f64>::new(3, 0, 2, &mut rng);
    let x: Array3<f64> = randn(ndarray::Dim([2, 4, 3]), &mut rng);
    let r: Array3<f64> = randn(ndarray::Dim([2, 4, 4]), &mut rng);
    let mut trained = layer.clone();
    let (_, cache) = trained.forward(&x, None);
    let (dx, _) = trained.backward(&cache, &r);
    let num = numeric_gradient(&x, STEP, |xv| dot(&layer.forward(xv, None).0, &r));
    assert!(max_relative_error(&dx, &num) < TOL);
    check_params(&layer, &trained, |m| dot(&m.forward(&x, None).0, &r));
}

#[test]
fn gru_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let layer = Gru::<f64>::new(3, 4, &mut rng);
    let mut layer = layer;
    layer.b_h.value.mapv_inplace(|_| 0.3);
    layer.b_x.value.mapv_inplace(|_| -0.2);
    let x: Array3<f64> = randn(ndarray::Dim([2, 5, 3]), &mut rng);
    let r: Array3<f64> = randn(ndarray::Dim([2, 5, 4]), &mut rng);
    let mut trained = layer.clone();
    let (_, cache) = trained.forward(&x);
    let dx = trained.backward(&cache, &r);
    let num = numeric_gradient(&x, STEP, |xv| dot(&layer.forward(xv).0, &r));
    assert!(max_relative_error(&dx, &num) < TOL);
    check_params(&layer, &trained, |m| dot(&m.forward(&x).0, &r));
}

#[test]
fn conv1d_gradients_with_static_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let layer = Conv1d::<f64>::new(3, 2, 4, 5, &mut rng);
    // sequence shorter than the kernel exercises both padding edges
    for t_len in [3usize, 7] {
        let x: Array3<f64> = randn(ndarray::Dim([2, t_len, 3]), &mut rng);
        let s: Array2<f64> = randn(ndarray::Dim([2, 2]), &mut rng);
        let r: Array3<f64> = randn(ndarray::Dim([2, t_len, 4]), &mut rng);
        let mut trained = layer.clone();
        let (_, cache) = trained.forward(&x, Some(&s));
        let (dx, ds) = trained.backward(&cache, &r);
        let num = numeric_gradient(&x, STEP, |xv| dot(&layer.forward(xv, Some(&s)).0, &r));
        assert!(max_relative_error(&dx, &num) < TOL);
        let num_s = numeric_gradient(&s, STEP, |sv| dot(&layer.forward(&x, Some(sv)).0, &r));
        assert!(max_relative_error(&ds.unwrap(), &num_s) < TOL);
        check_params(&layer, &trained, |m| dot(&m.forward(&x, Some(&s)).0, &r));
    }
}

#[test]
fn conv1d_static_channels_equal_explicit_concatenation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let with_static = Conv1d::<f64>::new(3, 2, 4, 5, &mut rng);
    // Build the equivalent plain convolution over 5 concatenated channels.
    let mut plain = Conv1d::<f64>::new(5, 0, 4, 5, &mut rng);
    for k in 0..5 {
        for c in 0..3 {
            plain.weight.value.row_mut(k * 5 + c).assign(&with_static.weight.value.row(k * 3 + c));
        }
        for c in 0..2 {
            plain.weight.value.row_mut(k * 5 + 3 + c).assign(&with_static.w_static.as_ref().unwrap().value.row(k * 2 + c));
        }
    }
    let x: Array3<f64> = randn(ndarray::Dim([2, 6, 3]), &mut rng);
    let s: Array2<f64> = randn(ndarray::Dim([2, 2]), &mut rng);
    let mut cat = Array3::zeros((2, 6, 5));
    cat.slice_mut(ndarray::s![.., .., ..3]).assign(&x);
    for b in 0..2 {
        for t in 0..6 {
            cat.slice_mut(ndarray::s![b, t, 3..]).assign(&s.row(b));
        }
    }
    let a = with_static.forward(&x, Some(&s)).0;
    let b = plain.forward(&cat, None).0;
    let diff = (&a - &b).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn conv2d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let layer = Conv2d::<f64>::new(2, 3, 3, 2, 1, &mut rng);
    let x: Array4<f64> = randn(ndarray::Dim([2, 5, 4, 2]), &mut rng);
    let (y, _) = layer.forward(&x);
    assert_eq!(y.dim(), (2, 3, 2, 3));
    let r: Array4<f64> = randn(y.raw_dim(), &mut rng);
    let mut trained = layer.clone();
    let (_, cache) = trained.forward(&x);
    let dx = trained.backward(&cache, &r);
    let num = numeric_gradient(&x, STEP, |xv| dot(&layer.forward(xv).0, &r));
    assert!(max_relative_error(&dx, &num) < TOL);
    check_params(&layer, &trained, |m| dot(&m.forward(&x).0, &r));
}

#[test]
fn batchnorm_gradients_train_and_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut layer = BatchNorm::<f64>::new(3);
    layer.gamma.value = randn(ndarray::Dim([1, 3]), &mut rng);
    layer.beta.value = randn(ndarray::Dim([1, 3]), &mut rng);
    layer.running_var.value.mapv_inplace(|_| 2.0);
    let x: Array2<f64> = randn(ndarray::Dim([6, 3]), &mut rng);
    let r: Array2<f64> = randn(ndarray::Dim([6, 3]), &mut rng);
    for train in [true, false] {
        let mut trained = layer.clone();
        let (_, cache) = trained.forward(&x, train);
        let dx = trained.backward(&cache, &r);
        let num = numeric_gradient(&x, STEP, |xv| dot(&layer.forward(xv, train).0, &r));
        assert!(max_relative_error(&dx, &num) < TOL, "train={train}");
        check_params(&layer, &trained, |m| dot(&m.forward(&x, train).0, &r));
    }
}

#[test]
fn batchnorm_running_statistics_follow_batches() {
    let mut layer = BatchNorm::<f64>::new(1);
    let x = Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let (_, cache) = layer.forward(&x, true);
    layer.backward(&cache, &Array2::zeros((4, 1)));
    // mean 2.5, unbiased variance 5/3
    assert!((layer.running_mean.value[[0, 0]] - 0.25).abs() < 1e-12);
    assert!((layer.running_var.value[[0, 0]] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
}
