use dgcvc::asv::{AsvConfig, AsvModel};
use dgcvc::features::{FeatureConfig, MelSpectrogram};
use dgcvc::nn::check::{max_relative_error, numeric_gradient};
use dgcvc::nn::{Module, Param};
use dgcvc::speaker::{speaker_embed, ReferenceEncoder, SpeakerConfig, SpeakerEncoder, StyleTokenLayer, Variant};
use dgcvc::Error;
use ndarray::{array, Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn variant_names() {
    for v in Variant::ALL {
        assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
    }
    assert_eq!("DGC".parse::<Variant>().unwrap(), Variant::Dgc);
    assert!("dgx".parse::<Variant>().is_err());
    assert!(Variant::D.needs_asv() && !Variant::G.needs_asv() && Variant::Dg.uses_dsequence());
}

#[test]
fn hand_computed_single_head_attention() {
    let mut layer = StyleTokenLayer::<f64>::new(2, 2, 2, 2, 1, &mut rng(0)).unwrap();
    layer.tokens = Param::new(array![[0.5, -1.0], [2.0, 0.25]]);
    layer.w_query = Param::new(array![[1.0, 0.0], [0.5, 2.0]]);
    layer.w_key = Param::new(array![[1.0, -1.0], [0.0, 3.0]]);
    layer.w_value = Param::new(array![[2.0, 1.0], [-1.0, 0.5]]);
    let query = array![[0.3, -0.7]];
    let (out, cache) = layer.forward(&query);

    let t = [[0.5f64.tanh(), (-1.0f64).tanh()], [2.0f64.tanh(), 0.25f64.tanh()]];
    let q = [0.3 * 1.0 + -0.7 * 0.5, 0.3 * 0.0 + -0.7 * 2.0];
    let k = |i: usize| [t[i][0] * 1.0 + t[i][1] * 0.0, -t[i][0] + t[i][1] * 3.0];
    let v = |i: usize| [t[i][0] * 2.0 + -t[i][1], t[i][0] * 1.0 + t[i][1] * 0.5];
    let score = |i: usize| (q[0] * k(i)[0] + q[1] * k(i)[1]) / 2f64.sqrt();
    let (e0, e1) = (score(0).exp(), score(1).exp());
    let (a0, a1) = (e0 / (e0 + e1), e1 / (e0 + e1));
    let expected = [a0 * v(0)[0] + a1 * v(1)[0], a0 * v(0)[1] + a1 * v(1)[1]];

    assert!((out[[0, 0]] - expected[0]).abs() < 1e-9);
    assert!((out[[0, 1]] - expected[1]).abs() < 1e-9);
    assert!((cache.weights()[[0, 0, 0]] - a0).abs() < 1e-12);
}

#[test]
fn single_token_returns_its_value() {
    let layer = StyleTokenLayer::<f64>::new(8, 1, 6, 8, 2, &mut rng(1)).unwrap();
    let value = layer.tokens.value.mapv(f64::tanh).dot(&layer.w_value.value);
    let mut r = rng(2);
    for _ in 0..3 {
        let q = Array2::from_shape_fn((2, 8), |_| r.random_range(-3.0..3.0));
        let (out, _) = layer.forward(&q);
        for row in out.rows() {
            assert!((&row - &value.row(0)).iter().all(|d| d.abs() < 1e-12));
        }
    }
}

#[test]
fn heads_must_divide_width() {
    assert!(matches!(StyleTokenLayer::<f64>::new(8, 4, 8, 10, 4, &mut rng(0)), Err(Error::Config(_))));
    let cfg = SpeakerConfig {
        heads: 3,
        ..SpeakerConfig::default()
    };
    assert!(cfg.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attention_weights_form_a_simplex(seed in any::<u64>(), heads in 1usize..5, n in 1usize..12, scale in 0.1f64..20.0) {
        let mut r = rng(seed);
        let layer = StyleTokenLayer::<f64>::new(16, n, 8, 4 * heads, heads, &mut r).unwrap();
        let q = Array2::from_shape_fn((3, 16), |_| r.random_range(-scale..scale));
        let (_, cache) = layer.forward(&q);
        for b in 0..3 {
            for h in 0..heads {
                let row = cache.weights().slice(ndarray::s![b, h, ..]);
                prop_assert!(row.iter().all(|&a| a >= 0.0));
                prop_assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }
    }
}

fn style_gradient_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut layer = StyleTokenLayer::<f64>::new(6, 4, 5, 8, 2, &mut r).unwrap();
    let q = Array2::from_shape_fn((3, 6), |_| r.random_range(-1.5..1.5));
    let up = Array2::from_shape_fn((3, 8), |_| r.random_range(-1.0..1.0));
    let loss = |l: &StyleTokenLayer<f64>, q: &Array2<f64>| (&l.forward(q).0 * &up).sum();
    let (_, cache) = layer.forward(&q);
    layer.zero_grad();
    let dq = layer.backward(&cache, &up);
    let mut worst = max_relative_error(&dq, &numeric_gradient(&q, 1e-4, |x| loss(&layer, x)));
    let snapshot = layer.clone();
    layer.visit("", &mut |name, p| {
        let num = numeric_gradient(&p.value, 1e-4, |v| {
            let mut l = snapshot.clone();
            l.visit_mut("", &mut |n2, p2| {
                if n2 == name {
                    p2.value = v.clone();
                }
            });
            loss(&l, &q)
        });
        worst = worst.max(max_relative_error(&p.grad, &num));
    });
    worst
}

#[test]
fn style_attention_gradients_match_finite_differences() {
    for seed in 0..20 {
        let e = style_gradient_case(seed);
        assert!(e < 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn reference_encoder_contracts() {
    let enc = ReferenceEncoder::<f64>::new(80, &[4, 6, 8], 256, &mut rng(3));
    let mut r = rng(4);
    for t in [8, 64, 160] {
        let x = Array3::from_shape_fn((2, t, 80), |_| r.random_range(-1.0..1.0));
        let (y, _) = enc.forward(&x, false).unwrap();
        assert_eq!(y.dim(), (2, 256));
        assert_eq!(enc.forward(&x, false).unwrap().0, y);
    }
    let short = Array3::zeros((1, 7, 80));
    match enc.forward(&short, false) {
        Err(Error::TooShort { min, .. }) => assert_eq!(min, 8),
        other => panic!("expected too-short error, got {:?}", other.map(|o| o.0)),
    }
}

#[test]
fn reference_encoder_gradients() {
    let mut enc = ReferenceEncoder::<f64>::new(12, &[2, 3], 5, &mut rng(5));
    let mut r = rng(6);
    let x = Array3::from_shape_fn((2, 9, 12), |_| r.random_range(-1.0..1.0));
    let up = Array2::from_shape_fn((2, 5), |_| r.random_range(-1.0..1.0));
    for train in [false, true] {
        let snapshot = enc.clone();
        let loss = |e: &ReferenceEncoder<f64>, x: &Array3<f64>| (&e.forward(x, train).unwrap().0 * &up).sum();
        let (_, cache) = enc.forward(&x, train).unwrap();
        enc.zero_grad();
        let dx = enc.backward(&cache, &up);
        assert!(max_relative_error(&dx, &numeric_gradient(&x, 1e-5, |v| loss(&snapshot, v))) < 1e-4);
        let mut worst = 0.0f64;
        enc.visit("", &mut |name, p| {
            if !p.trainable {
                return;
            }
            let num = numeric_gradient(&p.value, 1e-5, |v| {
                let mut e = snapshot.clone();
                e.visit_mut("", &mut |n2, p2| {
                    if n2 == name {
                        p2.value = v.clone();
                    }
                });
                loss(&e, &x)
            });
            // a bias feeding training-mode batch norm is cancelled by the batch mean
            let both_zero = p.grad.iter().chain(num.iter()).all(|g| g.abs() < 1e-9);
            if !both_zero {
                worst = worst.max(max_relative_error(&p.grad, &num));
            }
        });
        assert!(worst < 1e-4, "train={train}: {worst}");
        assert!(enc.grad_norm() > 0.0);
        enc = snapshot;
    }
}

fn toy_asv() -> AsvModel<f32> {
    AsvModel::new(
        AsvConfig {
            layers: 1,
            hidden: 8,
            embed_dim: 256,
            window: 160,
        },
        &mut rng(7),
    )
    .unwrap()
}

fn toy_speaker_cfg(variant: Variant) -> SpeakerConfig {
    SpeakerConfig {
        variant,
        conv_channels: vec![2, 4, 4],
        ..SpeakerConfig::default()
    }
}

fn mel(frames: usize, seed: u64) -> MelSpectrogram {
    let mut r = rng(seed);
    MelSpectrogram::new(Array2::from_shape_fn((frames, 80), |_| r.random_range(-9.0..2.0)), 256).unwrap()
}

#[test]
fn all_variants_emit_fixed_width_embeddings() {
    let features = FeatureConfig::default();
    let asv = toy_asv();
    let reference = mel(100, 1);
    for v in Variant::ALL {
        let enc = SpeakerEncoder::<f32>::new(&toy_speaker_cfg(v), 256, &mut rng(8)).unwrap();
        let e = speaker_embed(&enc, &reference, &features, Some(&asv)).unwrap();
        assert_eq!(e.vector.len(), 256, "{v}");
        assert_eq!(e.variant, v);
        if v.needs_asv() {
            assert!(matches!(speaker_embed(&enc, &reference, &features, None), Err(Error::MissingModel(_))));
        }
    }

    let d = SpeakerEncoder::<f32>::new(&toy_speaker_cfg(Variant::D), 256, &mut rng(8)).unwrap();
    let e = speaker_embed(&d, &reference, &features, Some(&asv)).unwrap();
    assert_eq!(e.vector, asv.dvector(&reference, &features).unwrap().into_inner());

    let dg = SpeakerEncoder::<f32>::new(&toy_speaker_cfg(Variant::Dg), 256, &mut rng(9)).unwrap();
    let dgc = SpeakerEncoder::<f32>::new(&toy_speaker_cfg(Variant::Dgc), 256, &mut rng(9)).unwrap();
    let a = speaker_embed(&dg, &reference, &features, Some(&asv)).unwrap();
    let b = speaker_embed(&dgc, &reference, &features, Some(&asv)).unwrap();
    assert_eq!(a.vector, b.vector);

    let checksum = asv.checksum();
    let g = SpeakerEncoder::<f32>::new(&toy_speaker_cfg(Variant::G), 256, &mut rng(9)).unwrap();
    let short = speaker_embed(&g, &mel(40, 2), &features, None).unwrap();
    let long = speaker_embed(&g, &mel(300, 3), &features, None).unwrap();
    assert_eq!(short.vector.len(), long.vector.len());
    assert_eq!(asv.checksum(), checksum);
}
