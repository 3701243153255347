//! Accuracy, per-class accuracy, confusion matrices and top-3 error records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::ArrayView2;
use thiserror::Error;

use crate::dataset::{ClassLabel, CLASS_NAMES, NUM_CLASSES};

pub const DEFAULT_ERROR_CAP: usize = 1000;
const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("probability row {row} sums to {sum}, not 1")]
    Normalization { row: usize, sum: f64 },
    #[error("malformed report CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// A misclassified sample and its three most probable classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRecord {
    pub index: usize,
    pub true_label: ClassLabel,
    pub top3: [(ClassLabel, f64); 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    /// NaN for classes with no samples.
    pub per_class_accuracy: [f64; NUM_CLASSES],
    /// Rows are true classes, columns predictions.
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub top3_accuracy: f64,
    pub errors: Vec<ErrorRecord>,
    /// Number of misclassified samples, including any beyond the record cap.
    pub error_count: usize,
    pub metadata: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.confusion[i][i]).sum()
    }
}

/// Indices of the three largest entries, descending, ties to the lower index.
fn top3(row: &[f64]) -> [usize; 3] {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    [order[0], order[1], order[2]]
}

pub fn evaluate(
    probabilities: ArrayView2<'_, f64>,
    labels: &[ClassLabel],
) -> Result<EvalReport, EvalError> {
    evaluate_with_cap(probabilities, labels, DEFAULT_ERROR_CAP)
}

pub fn evaluate_with_cap(
    probabilities: ArrayView2<'_, f64>,
    labels: &[ClassLabel],
    error_cap: usize,
) -> Result<EvalReport, EvalError> {
    let (m, c) = probabilities.dim();
    if c != NUM_CLASSES {
        return Err(EvalError::Dimension(format!(
            "probability matrix has {c} columns, expected {NUM_CLASSES}"
        )));
    }
    if m != labels.len() {
        return Err(EvalError::Dimension(format!(
            "{m} probability rows for {} labels",
            labels.len()
        )));
    }
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    let mut top3_hits = 0usize;
    let mut errors = Vec::new();
    let mut error_count = 0usize;
    let mut row_buf = [0.0f64; NUM_CLASSES];
    for (i, (row, &truth)) in probabilities.rows().into_iter().zip(labels).enumerate() {
        let sum: f64 = row.sum();
        if row.iter().any(|v| !v.is_finite()) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(EvalError::Normalization { row: i, sum });
        }
        row_buf.iter_mut().zip(row).for_each(|(d, &s)| *d = s);
        let best = top3(&row_buf);
        confusion[truth.index()][best[0]] += 1;
        if best.contains(&truth.index()) {
            top3_hits += 1;
        }
        if best[0] != truth.index() {
            error_count += 1;
            if errors.len() < error_cap {
                let entry = |k: usize| (ClassLabel::new(k as u8).unwrap(), row_buf[k]);
                errors.push(ErrorRecord {
                    index: i,
                    true_label: truth,
                    top3: [entry(best[0]), entry(best[1]), entry(best[2])],
                });
            }
        }
    }
    let mut per_class_accuracy = [f64::NAN; NUM_CLASSES];
    for (k, acc) in per_class_accuracy.iter_mut().enumerate() {
        let total: u64 = confusion[k].iter().sum();
        if total > 0 {
            *acc = confusion[k][k] as f64 / total as f64;
        }
    }
    let correct: u64 = (0..NUM_CLASSES).map(|k| confusion[k][k]).sum();
    let denom = m.max(1) as f64;
    let mut metadata = BTreeMap::new();
    metadata.insert("error_cap".to_owned(), error_cap.to_string());
    Ok(EvalReport {
        n: m,
        accuracy: correct as f64 / denom,
        per_class_accuracy,
        confusion,
        top3_accuracy: top3_hits as f64 / denom,
        errors,
        error_count,
        metadata,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!(
                "unknown report format '{other}' (expected text or csv)"
            )),
        }
    }
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Text => render_text(report),
    }
    .into_bytes()
}

fn render_csv(report: &EvalReport) -> String {
    let mut out = CLASS_NAMES.join(",");
    out.push('\n');
    for row in &report.confusion {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let _ = writeln!(out, "accuracy,{:.4}", report.accuracy);
    let _ = writeln!(out, "top3_accuracy,{:.4}", report.top3_accuracy);
    out
}

fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "samples        {}", report.n);
    let _ = writeln!(out, "accuracy       {:.4}", report.accuracy);
    let _ = writeln!(out, "top-3 accuracy {:.4}", report.top3_accuracy);
    for (k, v) in &report.metadata {
        let _ = writeln!(out, "{k:<14} {v}");
    }
    let _ = writeln!(out, "\nper-class accuracy");
    for (name, acc) in CLASS_NAMES.iter().zip(report.per_class_accuracy) {
        let _ = writeln!(out, "  {name:<11} {acc:.4}");
    }
    let _ = writeln!(out, "\nconfusion (rows = true, columns = predicted)");
    let _ = write!(out, "{:<11}", "");
    for name in CLASS_NAMES {
        let _ = write!(out, " {:>6}", &name[..name.len().min(6)]);
    }
    out.push('\n');
    for (name, row) in CLASS_NAMES.iter().zip(&report.confusion) {
        let _ = write!(out, "{name:<11}");
        for v in row {
            let _ = write!(out, " {v:>6}");
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "\nmisclassified: {} ({} listed)",
        report.error_count,
        report.errors.len()
    );
    for e in &report.errors {
        let _ = write!(
            out,
            "  #{:<6} true {:<11} top-3:",
            e.index,
            e.true_label.name()
        );
        for (label, p) in &e.top3 {
            let _ = write!(out, " {}={:.3}", label.name(), p);
        }
        out.push('\n');
    }
    out
}

/// Fields recovered from a rendered CSV report.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedCsvReport {
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub accuracy: f64,
    pub top3_accuracy: f64,
}

pub fn parse_csv_report(text: &str) -> Result<ParsedCsvReport, EvalError> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, reason: &str| EvalError::Csv {
        line: line + 1,
        reason: reason.to_owned(),
    };
    let (i, header) = lines.next().ok_or_else(|| bad(0, "empty input"))?;
    if header.split(',').ne(CLASS_NAMES.iter().copied()) {
        return Err(bad(i, "header must list the ten class names"));
    }
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for row in confusion.iter_mut() {
        let (i, line) = lines
            .next()
            .ok_or_else(|| bad(NUM_CLASSES, "missing confusion row"))?;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != NUM_CLASSES {
            return Err(bad(i, "confusion row must have 10 cells"));
        }
        for (dst, cell) in row.iter_mut().zip(cells) {
            *dst = cell
                .trim()
                .parse()
                .map_err(|_| bad(i, "non-integer cell"))?;
        }
    }
    let mut summary = |key: &str| -> Result<f64, EvalError> {
        let (i, line) = lines
            .next()
            .ok_or_else(|| bad(NUM_CLASSES + 1, "missing summary"))?;
        let value = line
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(','))
            .ok_or_else(|| bad(i, &format!("expected '{key},<value>'")))?;
        value
            .trim()
            .parse()
            .map_err(|_| bad(i, "non-numeric summary"))
    };
    let accuracy = summary("accuracy")?;
    let top3_accuracy = summary("top3_accuracy")?;
    Ok(ParsedCsvReport {
        confusion,
        accuracy,
        top3_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn labels(idx: &[u8]) -> Vec<ClassLabel> {
        idx.iter().map(|&i| ClassLabel::new(i).unwrap()).collect()
    }

    fn one_hot(pred: &[usize]) -> Array2<f64> {
        let mut p = Array2::zeros((pred.len(), NUM_CLASSES));
        for (i, &k) in pred.iter().enumerate() {
            p[[i, k]] = 1.0;
        }
        p
    }

    #[test]
    fn perfect_predictions() {
        let y = labels(&[0, 3, 9, 3]);
        let r = evaluate(one_hot(&[0, 3, 9, 3]).view(), &y).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.top3_accuracy, 1.0);
        assert_eq!(r.confusion[3][3], 2);
        assert_eq!(r.trace(), 4);
        assert!(r.errors.is_empty());
        assert!(r.per_class_accuracy[1].is_nan());
    }

    #[test]
    fn uniform_rows_break_ties_low() {
        let p = Array2::from_elem((4, NUM_CLASSES), 0.1);
        let r = evaluate(p.view(), &labels(&[0, 1, 0, 5])).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.confusion[1][0], 1);
        assert_eq!(r.confusion[5][0], 1);
        // top three are classes 0, 1, 2
        assert_eq!(r.top3_accuracy, 0.75);
    }

    #[test]
    fn hand_counted_three_samples() {
        let r = evaluate(one_hot(&[1, 2, 0]).view(), &labels(&[1, 2, 3])).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.confusion[3][0], 1);
        assert_eq!(r.errors.len(), 1);
        let e = &r.errors[0];
        assert_eq!((e.index, e.true_label.index()), (2, 3));
        assert_eq!(e.top3[0], (ClassLabel::new(0).unwrap(), 1.0));
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let mut p = one_hot(&[1]);
        p[[0, 2]] = 0.5;
        assert!(matches!(
            evaluate(p.view(), &labels(&[1])),
            Err(EvalError::Normalization { row: 0, .. })
        ));
        assert!(matches!(
            evaluate(Array2::zeros((1, 9)).view(), &labels(&[1])),
            Err(EvalError::Dimension(_))
        ));
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let r = evaluate(one_hot(&[1, 2, 0]).view(), &labels(&[1, 2, 3])).unwrap();
        let csv = String::from_utf8(render_report(&r, ReportFormat::Csv)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 13);
        assert!(lines[0].starts_with("airplane,automobile"));
        assert_eq!(lines[11], "accuracy,0.6667");
        let parsed = parse_csv_report(&csv).unwrap();
        assert_eq!(parsed.confusion, r.confusion);
    }

    #[test]
    fn accuracy_renders_four_places() {
        let mut r = evaluate(one_hot(&[1]).view(), &labels(&[1])).unwrap();
        r.accuracy = 0.946;
        let csv = String::from_utf8(render_report(&r, ReportFormat::Csv)).unwrap();
        assert!(csv.contains("\naccuracy,0.9460\n"));
    }

    #[test]
    fn error_cap_is_respected() {
        let r = evaluate_with_cap(one_hot(&[0, 0, 0]).view(), &labels(&[1, 2, 3]), 2).unwrap();
        assert_eq!(r.errors.len(), 2);
        assert_eq!(r.error_count, 3);
        assert_eq!(r.metadata["error_cap"], "2");
        let text = String::from_utf8(render_report(&r, ReportFormat::Text)).unwrap();
        assert!(text.contains("misclassified: 3 (2 listed)"));
    }
}
