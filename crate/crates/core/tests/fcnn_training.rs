mod common;

use common::{rng, uniform_matrix};
use ensemblekit::fcnn::{
    gradient_check, init_model, read_model, train_matrices, write_model, EarlyStopping, FcnnConfig,
    Mode, StopDecision,
};
use ndarray::{Array2, Axis};
use rand::Rng;

fn small_config(d: usize, hidden: Vec<usize>, classes: usize, seed: u64) -> FcnnConfig {
    FcnnConfig {
        hidden,
        classes,
        seed,
        ..FcnnConfig::new(d)
    }
}

#[test]
fn backprop_matches_finite_differences() {
    let shapes: [(usize, Vec<usize>, usize); 6] = [
        (4, vec![5], 3),
        (6, vec![8, 4], 10),
        (3, vec![7, 7, 5], 4),
        (10, vec![6, 3], 2),
        (5, vec![9], 10),
        (8, vec![12, 6], 5),
    ];
    let mut r = rng(31);
    for (seed, (d, hidden, classes)) in shapes.into_iter().enumerate() {
        let cfg = small_config(d, hidden, classes, seed as u64);
        let x = uniform_matrix(&mut r, 7, d);
        let labels: Vec<usize> = (0..7).map(|_| r.random_range(0..classes)).collect();
        let err = gradient_check(&cfg, x.view(), &labels).unwrap();
        assert!(err < 1e-4, "{cfg:?}: relative error {err}");
    }
}

#[test]
fn inverted_dropout_preserves_expected_activation() {
    let cfg = FcnnConfig {
        dropout_rate: 0.5,
        ..small_config(6, vec![40, 10], 3, 1)
    };
    let model = init_model(&cfg).unwrap();
    let x = uniform_matrix(&mut rng(2), 1, 6).mapv(|v| v + 1.0);
    let clean = model
        .hidden_activations(x.view(), Mode::Infer, None)
        .unwrap();
    let clean_sum: f64 = clean[0].sum();
    assert!(clean_sum > 0.0);
    let mut noise = rng(3);
    let passes = 10_000;
    let mut total = 0.0;
    for _ in 0..passes {
        let h = model
            .hidden_activations(x.view(), Mode::Train, Some(&mut noise))
            .unwrap();
        total += h[0].sum();
    }
    let mean = total / passes as f64;
    let rel = (mean - clean_sum).abs() / clean_sum;
    assert!(rel < 0.02, "mean {mean} vs {clean_sum}");
}

#[test]
fn dropout_only_follows_first_hidden_layer() {
    let cfg = FcnnConfig {
        dropout_rate: 0.5,
        ..small_config(4, vec![16, 8], 3, 4)
    };
    let model = init_model(&cfg).unwrap();
    let x = uniform_matrix(&mut rng(6), 3, 4);
    let mut noise = rng(7);
    let train = model
        .hidden_activations(x.view(), Mode::Train, Some(&mut noise))
        .unwrap();
    let infer = model
        .hidden_activations(x.view(), Mode::Infer, None)
        .unwrap();
    // the second layer sees the dropped first layer, so recompute it by hand
    let l1 = &model.layers()[1];
    let expected = (train[0].dot(&l1.weights) + &l1.bias).mapv(|v| v.max(0.0));
    assert!((&train[1] - &expected).iter().all(|v| v.abs() < 1e-12));
    for (t, i) in train[0].iter().zip(infer[0].iter()) {
        assert!(*t == 0.0 || (t - 2.0 * i).abs() < 1e-12);
    }
}

fn blobs(n_per_class: usize, classes: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let mut x = Array2::zeros((n_per_class * classes, d));
    let mut y = Vec::new();
    for i in 0..n_per_class * classes {
        let c = i % classes;
        for j in 0..d {
            let center = if j % classes == c { 3.0 } else { 0.0 };
            x[[i, j]] = center + r.random::<f64>() - 0.5;
        }
        y.push(c);
    }
    (x, y)
}

#[test]
fn learns_linearly_separable_classes() {
    let (x, y) = blobs(30, 4, 8, 40);
    let cfg = FcnnConfig {
        learning_rate: 1e-2,
        batch_size: 16,
        max_epochs: 60,
        patience: 60,
        ..small_config(8, vec![32, 16], 4, 5)
    };
    let outcome = train_matrices(&cfg, x.view(), &y, &mut |m, _| {
        m.accuracy(x.view(), &y).unwrap()
    })
    .unwrap();
    assert_eq!(outcome.model.accuracy(x.view(), &y).unwrap(), 1.0);
}

#[test]
fn full_batch_loss_decreases_early() {
    let (x, y) = blobs(20, 3, 6, 41);
    let cfg = FcnnConfig {
        dropout_rate: 0.0,
        learning_rate: 1e-3,
        batch_size: x.nrows(),
        max_epochs: 5,
        patience: 100,
        ..small_config(6, vec![16], 3, 6)
    };
    let outcome = train_matrices(&cfg, x.view(), &y, &mut |_, _| 0.0).unwrap();
    let losses: Vec<f64> = outcome
        .model
        .history()
        .iter()
        .map(|h| h.train_loss)
        .collect();
    assert_eq!(losses.len(), 5);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0], "{losses:?}");
    }
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let (x, y) = blobs(10, 3, 5, 42);
    let cfg = FcnnConfig {
        max_epochs: 8,
        batch_size: 7,
        ..small_config(5, vec![10, 6], 3, 77)
    };
    let mut score = |m: &ensemblekit::fcnn::FcnnModel, _: usize| m.accuracy(x.view(), &y).unwrap();
    let a = train_matrices(&cfg, x.view(), &y, &mut score).unwrap();
    let b = train_matrices(&cfg, x.view(), &y, &mut score).unwrap();
    assert_eq!(a.model, b.model);
    let other = FcnnConfig { seed: 78, ..cfg };
    let c = train_matrices(&other, x.view(), &y, &mut score).unwrap();
    assert_ne!(a.model.layers()[0].weights, c.model.layers()[0].weights);
}

#[test]
fn stops_after_patience_and_restores_best_snapshot() {
    let (x, y) = blobs(5, 3, 4, 43);
    let cfg = FcnnConfig {
        max_epochs: 200,
        patience: 10,
        batch_size: 4,
        ..small_config(4, vec![8], 3, 9)
    };
    let sequence = [0.5, 0.6];
    let mut snapshots = Vec::new();
    let mut validator = |m: &ensemblekit::fcnn::FcnnModel, epoch: usize| {
        snapshots.push(m.layers().to_vec());
        sequence.get(epoch - 1).copied().unwrap_or(0.6)
    };
    let outcome = train_matrices(&cfg, x.view(), &y, &mut validator).unwrap();
    assert!(outcome.stopped_early);
    assert_eq!(outcome.best_epoch, 2);
    assert_eq!(outcome.stop_epoch, 12);
    assert_eq!(outcome.best_val_accuracy, 0.6);
    assert_eq!(snapshots.len(), 12);
    assert_eq!(outcome.model.layers(), &snapshots[1][..]);
    assert_eq!(outcome.model.history().len(), 12);
}

#[test]
fn early_stopping_requires_strict_gain() {
    let mut s = EarlyStopping::new(2, 0.0);
    assert_eq!(s.update(0.5), StopDecision::Improved);
    assert_eq!(s.update(0.5), StopDecision::Waiting);
    assert_eq!(s.update(0.51), StopDecision::Improved);
    assert_eq!(s.update(0.4), StopDecision::Waiting);
    assert_eq!(s.update(0.51), StopDecision::Stop);
    let mut d = EarlyStopping::new(1, 0.05);
    d.update(0.5);
    assert_eq!(d.update(0.54), StopDecision::Stop);
}

#[test]
fn probabilities_are_normalized() {
    let cfg = small_config(5, vec![7], 10, 10);
    let model = init_model(&cfg).unwrap();
    let x = uniform_matrix(&mut rng(1), 9, 5) * 100.0;
    let p = model.predict_proba(x.view()).unwrap();
    for s in p.sum_axis(Axis(1)).iter() {
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn model_file_round_trip_is_bit_exact() {
    let (x, y) = blobs(4, 3, 4, 44);
    let cfg = FcnnConfig {
        max_epochs: 3,
        ..small_config(4, vec![6, 5], 3, 12)
    };
    let outcome = train_matrices(&cfg, x.view(), &y, &mut |_, e| e as f64).unwrap();
    let mut bytes = Vec::new();
    write_model(&outcome.model, &mut bytes).unwrap();
    let back = read_model(&bytes[..]).unwrap();
    assert_eq!(back, outcome.model);
    assert_eq!(back.history().len(), 3);
    assert!(read_model(&bytes[..bytes.len() - 1]).is_err());
}
