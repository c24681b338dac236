mod common;

use common::*;
use ndarray::Array2;
use rand::Rng;
use rede::par::Strategy;
use rede::whitening::{fit_whitening, unit_normalize, DEFAULT_EPS_FLOOR};

/// Samples with covariance `R diag(s²) Rᵀ`, `s` in [0.2, 5].
fn full_rank_samples(seed: u64, m: usize, d: usize) -> Array2<f64> {
    let mut r = rng(seed);
    let rot = to_na(&gaussian_matrix(&mut r, d, d)).qr().q();
    let s: Vec<f64> = (0..d).map(|_| r.random_range(0.2..5.0)).collect();
    let z = gaussian_matrix(&mut r, m, d);
    Array2::from_shape_fn((m, d), |(i, j)| (0..d).map(|k| z[[i, k]] * s[k] * rot[(j, k)]).sum::<f64>() + 1.5)
}

#[test]
fn transformed_fit_samples_have_identity_covariance() {
    for seed in 0..10 {
        let x = full_rank_samples(seed, 200, 16);
        let t = fit_whitening(&x, 16, DEFAULT_EPS_FLOOR).unwrap();
        let y = t.apply_rows(&x, Strategy::Sequential).unwrap();
        let c = covariance(&y);
        let err = (c - nalgebra::DMatrix::<f64>::identity(16, 16)).abs().max();
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn column_space_matches_oracle_subspace() {
    let mut r = rng(99);
    for case in 0..50 {
        let d = r.random_range(1..=6);
        let m = r.random_range(d + 1..=30);
        let l = r.random_range(1..=d);
        let x = gaussian_matrix(&mut r, m, d);
        let t = fit_whitening(&x, l, DEFAULT_EPS_FLOOR).unwrap();
        let w = to_na(&t.matrix().to_owned());
        let angle = max_principal_angle(&w, &top_principal_subspace(&x, l));
        assert!(angle < 1e-6, "case {case}: d={d} m={m} l={l} angle={angle}");
    }
}

#[test]
fn eigenvalues_match_oracle() {
    let x = full_rank_samples(4, 80, 9);
    let t = fit_whitening(&x, 9, DEFAULT_EPS_FLOOR).unwrap();
    for (a, b) in t.eigenvalues().iter().zip(eigenvalues_desc(&x)) {
        assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn rank_deficient_shots_stay_finite() {
    // 10 shots in 40 dims: at most 9 non-zero eigenvalues.
    let x = gaussian_matrix(&mut rng(5), 10, 40);
    let t = fit_whitening(&x, 40, DEFAULT_EPS_FLOOR).unwrap();
    assert!(t.floored_count() >= 31);
    let y = t.apply(&x.row(0).to_vec()).unwrap();
    assert!(y.iter().all(|v| v.is_finite()));
}

#[test]
fn parallel_and_sequential_transforms_agree() {
    let x = full_rank_samples(8, 300, 12);
    let t = fit_whitening(&x, 7, DEFAULT_EPS_FLOOR).unwrap();
    let a = t.apply_rows(&x, Strategy::Sequential).unwrap();
    let b = t.apply_rows(&x, Strategy::Parallel).unwrap();
    assert_eq!(a, b);
    for i in [0, 17, 299] {
        assert_eq!(a.row(i).to_vec(), t.apply(&x.row(i).to_vec()).unwrap());
    }
}

#[test]
fn normalization_gives_unit_rows() {
    let mut v = vec![3.0, 4.0, 0.0];
    assert!(unit_normalize(&mut v));
    assert_eq!(v, vec![0.6, 0.8, 0.0]);
    let mut z = vec![0.0; 3];
    assert!(!unit_normalize(&mut z));
    assert_eq!(z, vec![0.0; 3]);
}
