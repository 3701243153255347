mod common;

use common::{covariance, jacobi_eigen, max_abs_diff, rng, uniform_matrix};
use ensemblekit::pca::{pca_fit, read_pcam, write_pcam};
use ndarray::{array, s, Array2, Axis};
use rand::Rng;

#[test]
fn projector_matches_covariance_eigendecomposition() {
    let mut r = rng(21);
    for case in 0..50 {
        let n = r.random_range(3..=50);
        let d = r.random_range(2..=20);
        let x = uniform_matrix(&mut r, n, d);
        let (values, vectors) = jacobi_eigen(&covariance(&x));
        let max_k = d.min(n - 1);
        let mut k = r.random_range(1..=max_k);
        // the projector is only defined when the k-th eigenvalue is separated
        while k < max_k && values[k - 1] - values[k] < 1e-6 {
            k -= 1;
        }
        let model = pca_fit(x.view(), k).unwrap();
        let w = model.components();
        let ours = w.t().dot(w);
        let v = vectors.slice(s![.., ..k]);
        let oracle = v.dot(&v.t());
        let diff = max_abs_diff(&ours, &oracle);
        assert!(diff < 1e-6, "case {case} (n={n}, d={d}, k={k}): {diff}");
        for (i, &lambda) in values.iter().take(k).enumerate() {
            assert!((model.variances()[i] - lambda).abs() < 1e-9 * (1.0 + lambda));
        }
        let total: f64 = values.iter().sum();
        assert!((model.total_variance() - total).abs() < 1e-9 * (1.0 + total));
    }
}

#[test]
fn components_are_orthonormal() {
    let mut r = rng(3);
    for &(n, d, k) in &[(40, 10, 10), (8, 30, 8), (25, 25, 12)] {
        let x = uniform_matrix(&mut r, n, d);
        let model = pca_fit(x.view(), k).unwrap();
        let gram = model.components().dot(&model.components().t());
        assert!(max_abs_diff(&gram, &Array2::eye(k)) < 1e-10);
    }
}

#[test]
fn diagonal_variance_ratios() {
    // covariance is exactly diag(8/3, 2/3), i.e. proportional to diag(4, 1)
    let x = array![[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
    let model = pca_fit(x.view(), 2).unwrap();
    let ratio = model.explained_variance_ratio().unwrap();
    assert!((ratio[0] - 0.8).abs() < 1e-9);
    assert!((ratio[1] - 0.2).abs() < 1e-9);
}

#[test]
fn reconstruction_error_never_grows_with_k() {
    let mut r = rng(8);
    let x = uniform_matrix(&mut r, 30, 12);
    let full = pca_fit(x.view(), 12).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..=12 {
        let m = full.truncated(k).unwrap();
        let back = m
            .inverse_transform(m.transform(x.view()).unwrap().view())
            .unwrap();
        let err: f64 = (&back - &x).iter().map(|v| v * v).sum();
        assert!(err <= last + 1e-9, "k={k}: {err} > {last}");
        last = err;
    }
    assert!(last < 1e-18 * x.len() as f64 + 1e-12);
}

#[test]
fn projected_training_data_is_centered_and_decorrelated() {
    let mut r = rng(13);
    let x = uniform_matrix(&mut r, 60, 9);
    let model = pca_fit(x.view(), 5).unwrap();
    let z = model.transform(x.view()).unwrap();
    let mean = z.mean_axis(Axis(0)).unwrap();
    assert!(mean.iter().all(|m| m.abs() < 1e-12));
    let cov = covariance(&z);
    for i in 0..5 {
        for j in 0..5 {
            let expected = if i == j { model.variances()[i] } else { 0.0 };
            assert!((cov[[i, j]] - expected).abs() < 1e-10);
        }
    }
}

#[test]
fn transform_is_affine() {
    // z(a x1 + (1 - a) x2) = a z(x1) + (1 - a) z(x2)
    let mut r = rng(17);
    let x = uniform_matrix(&mut r, 20, 6);
    let model = pca_fit(x.view(), 3).unwrap();
    let (x1, x2) = (uniform_matrix(&mut r, 4, 6), uniform_matrix(&mut r, 4, 6));
    let a = 0.3;
    let mixed = model.transform((&x1 * a + &x2 * (1.0 - a)).view()).unwrap();
    let z1 = model.transform(x1.view()).unwrap();
    let z2 = model.transform(x2.view()).unwrap();
    assert!(max_abs_diff(&mixed, &(z1 * a + z2 * (1.0 - a))) < 1e-12);
}

#[test]
fn sign_convention_is_deterministic() {
    let mut r = rng(19);
    let x = uniform_matrix(&mut r, 30, 7);
    let model = pca_fit(x.view(), 4).unwrap();
    for row in model.components().rows() {
        let top = row
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        assert!(top > 0.0);
    }
    let again = pca_fit(x.view(), 4).unwrap();
    assert_eq!(model, again);
}

#[test]
fn model_file_round_trip_is_bit_exact() {
    let mut r = rng(23);
    let x = uniform_matrix(&mut r, 15, 5);
    let model = pca_fit(x.view(), 3).unwrap();
    let mut bytes = Vec::new();
    write_pcam(&model, &mut bytes).unwrap();
    assert_eq!(read_pcam(&bytes[..]).unwrap(), model);
}
