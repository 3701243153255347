mod common;

use common::{label, rng};
use ensemblekit::dataset::NUM_CLASSES;
use ensemblekit::eval::{
    evaluate, evaluate_with_cap, parse_csv_report, render_report, EvalError, ReportFormat,
};
use ndarray::Array2;
use rand::Rng;

fn random_predictions(n: usize, seed: u64) -> (Array2<f64>, Vec<ensemblekit::ClassLabel>) {
    let mut r = rng(seed);
    let mut p = Array2::from_shape_fn((n, NUM_CLASSES), |_| r.random::<f64>());
    for mut row in p.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    let labels = (0..n)
        .map(|_| label(r.random_range(0..NUM_CLASSES)))
        .collect();
    (p, labels)
}

#[test]
fn trace_over_n_is_accuracy() {
    for seed in 0..20 {
        let n = 50 + seed as usize * 37;
        let (p, labels) = random_predictions(n, seed);
        let report = evaluate(p.view(), &labels).unwrap();
        assert_eq!(report.trace() as f64 / n as f64, report.accuracy);
        assert!(report.top3_accuracy >= report.accuracy);
        let total: u64 = report.confusion.iter().flatten().sum();
        assert_eq!(total, n as u64);
        assert_eq!(report.error_count, n - report.trace() as usize);
    }
}

#[test]
fn csv_round_trip_is_exact() {
    for seed in 0..10 {
        let (p, labels) = random_predictions(333, 100 + seed);
        let report = evaluate(p.view(), &labels).unwrap();
        let bytes = render_report(&report, ReportFormat::Csv);
        let text = String::from_utf8(bytes.clone()).unwrap();
        let parsed = parse_csv_report(&text).unwrap();
        assert_eq!(parsed.confusion, report.confusion);
        assert_eq!(
            format!("{:.4}", parsed.accuracy),
            format!("{:.4}", report.accuracy)
        );
        assert_eq!(
            format!("{:.4}", parsed.top3_accuracy),
            format!("{:.4}", report.top3_accuracy)
        );
        // re-rendering what was parsed reproduces the same bytes
        let mut again = report.clone();
        again.accuracy = parsed.accuracy;
        again.top3_accuracy = parsed.top3_accuracy;
        assert_eq!(render_report(&again, ReportFormat::Csv), bytes);
    }
}

#[test]
fn ties_go_to_the_lowest_class() {
    let p = Array2::from_elem((2, NUM_CLASSES), 0.1);
    let report = evaluate(p.view(), &[label(0), label(3)]).unwrap();
    assert_eq!(report.confusion[0][0], 1);
    assert_eq!(report.confusion[3][0], 1);
    assert_eq!(report.top3_accuracy, 0.5);
    let e = &report.errors[0];
    assert_eq!(e.index, 1);
    assert_eq!(
        [
            e.top3[0].0.index(),
            e.top3[1].0.index(),
            e.top3[2].0.index()
        ],
        [0, 1, 2]
    );
}

#[test]
fn empty_classes_report_nan_and_cap_limits_records() {
    let (p, _) = random_predictions(40, 7);
    let labels = vec![label(2); 40];
    let report = evaluate_with_cap(p.view(), &labels, 3).unwrap();
    assert!(report.per_class_accuracy[0].is_nan());
    assert!(!report.per_class_accuracy[2].is_nan());
    assert!(report.errors.len() <= 3);
    assert!(report.error_count >= report.errors.len());
}

#[test]
fn rejects_bad_shapes_and_unnormalized_rows() {
    let p = Array2::from_elem((2, 9), 1.0 / 9.0);
    assert!(matches!(
        evaluate(p.view(), &[label(0), label(1)]),
        Err(EvalError::Dimension(_))
    ));
    let p = Array2::from_elem((2, NUM_CLASSES), 0.2);
    assert!(matches!(
        evaluate(p.view(), &[label(0), label(1)]),
        Err(EvalError::Normalization { row: 0, .. })
    ));
    assert!(parse_csv_report("airplane,cat\n").is_err());
}

#[test]
fn text_report_lists_every_class() {
    let (p, labels) = random_predictions(60, 9);
    let text = String::from_utf8(render_report(
        &evaluate(p.view(), &labels).unwrap(),
        ReportFormat::Text,
    ))
    .unwrap();
    for name in ensemblekit::dataset::CLASS_NAMES {
        assert!(text.contains(name));
    }
}
