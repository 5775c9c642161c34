//! Gradient oracle, invariants and training behaviour of the two-tower classifier.

use ndarray::Array2;
use neurowave::classifier::{
    attention_maps, forward, init, loss_and_grad, predict, train, train_from, ModelConfig, ModelParams, Towers,
    TrainHyper,
};
use neurowave::signal::{Epoch, EpochSet, Label};
use neurowave::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn tiny() -> ModelConfig {
    ModelConfig {
        window_len: 16,
        channels: 2,
        embed_dim: 4,
        heads: 2,
        attention_blocks: 1,
        ffn_dim: 8,
        classes: 2,
        dropout: 0.0,
        temporal_filters: 3,
        kernel_len: 4,
        towers: Towers::Both,
        seed: 5,
    }
}

fn small() -> ModelConfig {
    ModelConfig {
        window_len: 32,
        channels: 4,
        embed_dim: 8,
        heads: 2,
        ffn_dim: 16,
        temporal_filters: 8,
        dropout: 0.1,
        ..tiny()
    }
}

fn noise(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

/// Noise windows with a +2 offset on every fake epoch.
fn offset_set(n: usize, cfg: &ModelConfig, seed: u64) -> EpochSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let epochs = (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Real } else { Label::Fake };
            let shift = if label == Label::Fake { 2.0 } else { 0.0 };
            Epoch {
                window: noise(cfg.window_len, cfg.channels, &mut rng) + shift,
                label: Some(label),
                origin_time_s: i as f64,
            }
        })
        .collect();
    EpochSet {
        epochs,
        window_s: cfg.window_len as f64 / 64.0,
        overlap_fraction: 0.0,
        sample_rate_hz: 64.0,
        channel_names: (0..cfg.channels).map(|c| format!("C{c}")).collect(),
    }
}

fn loss_at(params: &ModelParams, windows: &[&Array2<f64>], labels: &[Label]) -> f64 {
    loss_and_grad(params, windows, labels).unwrap().0
}

#[test]
fn gradient_matches_central_differences() {
    let cfg = tiny();
    let params = init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let windows: Vec<Array2<f64>> = (0..3).map(|_| noise(16, 2, &mut rng)).collect();
    let refs: Vec<&Array2<f64>> = windows.iter().collect();
    let labels = [Label::Real, Label::Fake, Label::Fake];
    let (_, grad) = loss_and_grad(&params, &refs, &labels).unwrap();

    let h = 1e-4;
    let mut worst = (0.0, String::new());
    for (name, _, values) in params.blocks() {
        let offset = values.as_ptr() as usize - params.values().as_ptr() as usize;
        let start = offset / std::mem::size_of::<f64>();
        let analytic = grad.block(name).unwrap();
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = params.clone();
            plus.values_mut()[start + i] += h;
            let mut minus = params.clone();
            minus.values_mut()[start + i] -= h;
            let numeric = (loss_at(&plus, &refs, &labels) - loss_at(&minus, &refs, &labels)) / (2.0 * h);
            // Coordinates whose true gradient is ~0 are compared absolutely.
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}]: analytic {a:e}, numeric {numeric:e}"));
            }
        }
    }
    assert!(worst.0 <= 1e-3, "worst relative error {:e} at {}", worst.0, worst.1);
}

#[test]
fn zero_head_gives_uniform_loss() {
    let cfg = tiny();
    let mut params = init(&cfg).unwrap();
    let head: Vec<usize> = {
        let base = params.values().as_ptr() as usize;
        params
            .blocks()
            .filter(|(n, _, _)| n.starts_with("head"))
            .flat_map(|(_, _, v)| {
                let s = (v.as_ptr() as usize - base) / 8;
                s..s + v.len()
            })
            .collect()
    };
    for i in head {
        params.values_mut()[i] = 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = noise(16, 2, &mut rng);
    let loss = loss_at(&params, &[&w, &w], &[Label::Real, Label::Fake]);
    assert!((loss - 2f64.ln()).abs() < 1e-12, "{loss}");
}

#[test]
fn disabled_tower_gets_zero_gradient() {
    let cfg = ModelConfig {
        towers: Towers::TimeOnly,
        ..tiny()
    };
    let params = init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = noise(16, 2, &mut rng);
    let (_, grad) = loss_and_grad(&params, &[&w], &[Label::Fake]).unwrap();
    let mut saw_time = false;
    for (name, _, g) in grad.blocks() {
        if name.starts_with("freq.") {
            assert!(g.iter().all(|v| *v == 0.0), "{name}");
        }
        saw_time |= name.starts_with("time.") && g.iter().any(|v| *v != 0.0);
    }
    assert!(saw_time);
}

#[test]
fn logits_shape_and_batch_independence() {
    let cfg = ModelConfig {
        window_len: 128,
        channels: 64,
        ..ModelConfig::default()
    };
    let params = init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ws: Vec<Array2<f64>> = (0..3).map(|_| noise(128, 64, &mut rng)).collect();
    let logits = forward(&params, &[&ws[0], &ws[1], &ws[0], &ws[2]]).unwrap();
    assert_eq!(logits.dim(), (4, 2));
    assert!(logits.iter().all(|v| v.is_finite()));
    assert_eq!(logits.row(0), logits.row(2));

    let permuted = forward(&params, &[&ws[2], &ws[0], &ws[1]]).unwrap();
    assert_eq!(permuted.row(0), logits.row(3));
    assert_eq!(permuted.row(1), logits.row(0));
    assert_eq!(permuted.row(2), logits.row(1));

    let negated = -&ws[1];
    let flipped = forward(&params, &[&negated]).unwrap();
    assert_ne!(flipped.row(0), logits.row(1));
}

#[test]
fn shape_mismatch_is_rejected() {
    let params = init(&tiny()).unwrap();
    let w = Array2::zeros((15, 2));
    assert!(matches!(forward(&params, &[&w]), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn attention_rows_are_distributions() {
    let params = init(&small()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = noise(32, 4, &mut rng) * 5.0;
    for block in attention_maps(&params, &w).unwrap() {
        for head in block {
            for row in head.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-6);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
    }
}

#[test]
fn non_finite_parameter_is_named() {
    let mut params = init(&tiny()).unwrap();
    let base = params.values().as_ptr() as usize;
    let idx = params
        .blocks()
        .find(|(n, _, _)| *n == "time.block0.ffn1")
        .map(|(_, _, v)| (v.as_ptr() as usize - base) / 8)
        .unwrap();
    params.values_mut()[idx] = f64::NAN;
    let w = Array2::zeros((16, 2));
    match loss_and_grad(&params, &[&w], &[Label::Real]) {
        Err(Error::NonFiniteLoss { block }) => assert_eq!(block, "time.block0.ffn1"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn separable_offsets_are_learned() {
    let cfg = small();
    let train_set = offset_set(96, &cfg, 10);
    let hyper = TrainHyper {
        lr: 3e-3,
        epochs: 20,
        batch_size: 16,
        seed: 4,
        class_weighting: true,
    };
    let (params, report) = train(&cfg, &train_set, &hyper).unwrap();
    assert!(report.epoch_loss.iter().all(|l| l.is_finite()));
    let train_acc = accuracy(&params, &train_set);
    assert_eq!(train_acc, 1.0, "report {:?}", report.epoch_accuracy);

    let held_out = offset_set(200, &cfg, 11);
    let acc = accuracy(&params, &held_out);
    assert!(acc >= 0.95, "held-out accuracy {acc}");
}

fn accuracy(params: &ModelParams, set: &EpochSet) -> f64 {
    let preds = predict(params, set).unwrap();
    let hits = preds
        .iter()
        .zip(&set.epochs)
        .filter(|(p, e)| p.label() == e.label)
        .count();
    hits as f64 / set.len() as f64
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..small()
    };
    let set = offset_set(24, &cfg, 12);
    let hyper = TrainHyper {
        lr: 0.0,
        epochs: 3,
        batch_size: 5,
        ..TrainHyper::default()
    };
    let (params, report) = train(&cfg, &set, &hyper).unwrap();
    assert_eq!(params, init(&cfg).unwrap());
    let first = report.epoch_loss[0];
    assert!(report.epoch_loss.iter().all(|l| (l - first).abs() < 1e-12));
}

#[test]
fn training_is_deterministic() {
    let cfg = small();
    let set = offset_set(20, &cfg, 13);
    let hyper = TrainHyper {
        epochs: 2,
        batch_size: 8,
        ..TrainHyper::default()
    };
    let (pa, ra) = train(&cfg, &set, &hyper).unwrap();
    let (pb, rb) = train(&cfg, &set, &hyper).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(pa, pb);
    let (pc, _) = train_from(init(&cfg).unwrap(), &set, &hyper).unwrap();
    assert_eq!(pa, pc);
}

#[test]
fn single_class_training_set_errors() {
    let cfg = small();
    let mut set = offset_set(10, &cfg, 14);
    set.epochs.iter_mut().for_each(|e| e.label = Some(Label::Real));
    assert!(matches!(
        train(&cfg, &set, &TrainHyper::default()),
        Err(Error::SingleClass(_))
    ));
}

#[test]
fn prediction_ignores_partitioning() {
    let cfg = small();
    let params = init(&cfg).unwrap();
    let set = offset_set(9, &cfg, 15);
    let whole = predict(&params, &set).unwrap();
    let first = predict(&params, &set.subset(&[0, 1, 2, 3])).unwrap();
    let rest = predict(&params, &set.subset(&[4, 5, 6, 7, 8])).unwrap();
    assert_eq!(whole, [first, rest].concat());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn probabilities_sum_to_one(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let cfg = ModelConfig { seed, ..tiny() };
        let params = init(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = offset_set(3, &cfg, seed);
        set.epochs.iter_mut().for_each(|e| e.window = noise(16, 2, &mut rng) * scale);
        for p in predict(&params, &set).unwrap() {
            prop_assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.probabilities[p.class] >= p.probabilities[1 - p.class]);
        }
    }
}
