mod common;

use common::*;
use rede::density::EstimatorConfig;
use rede::detector::{fit_detector, DetectorConfig};
use rede::eval::*;
use rede::par::Strategy;
use rede::synthetic::{SyntheticBenchmark, SyntheticConfig};

fn estimators(names: &[&str]) -> Vec<EstimatorConfig> {
    names.iter().map(|n| n.parse().unwrap()).collect()
}

#[test]
fn whitening_beats_zero_shot_on_benchmark() {
    for seed in 0..5 {
        let b = SyntheticBenchmark::generate(&SyntheticConfig::default(), seed).unwrap();
        let s = b.splits();
        let whitened = low_resource_cell(&s, 10, seed, &DetectorConfig::default()).unwrap();
        let zero = low_resource_cell(
            &s,
            10,
            seed,
            &DetectorConfig {
                use_transform: false,
                ..DetectorConfig::default()
            },
        )
        .unwrap();
        assert!(whitened.test.f1 >= 0.95, "seed {seed}: {}", whitened.test.f1);
        assert!(whitened.test.f1 - zero.test.f1 >= 0.05, "seed {seed}: zero-shot {}", zero.test.f1);
    }
}

#[test]
fn low_resource_curve_is_monotone() {
    let b = SyntheticBenchmark::generate(&SyntheticConfig::default(), 3).unwrap();
    let t = low_resource_sweep(&b.splits(), &[5, 50], &[1, 2, 3, 4, 5], &DetectorConfig::default(), Strategy::Parallel)
        .unwrap();
    assert!(t.rows[1].mean_f1 >= t.rows[0].mean_f1, "{:?}", t.rows);
    assert_eq!(t.cells.len(), 10);
}

#[test]
fn low_resource_rows_are_reproducible_cells() {
    let b = SyntheticBenchmark::generate(&SyntheticConfig::default(), 9).unwrap();
    let cfg = DetectorConfig::default();
    let a = low_resource_sweep(&b.splits(), &[5, 20], &[7, 8], &cfg, Strategy::Parallel).unwrap();
    let c = low_resource_sweep(&b.splits(), &[5, 20], &[7, 8], &cfg, Strategy::Sequential).unwrap();
    assert_eq!(strip_time(a.clone()), strip_time(c));
    for cell in &a.cells {
        let single = low_resource_cell(&b.splits(), cell.size, cell.seed, &cfg).unwrap();
        assert_eq!(single.test.f1, cell.result.test.f1);
        assert_eq!(single.test.counts, cell.result.test.counts);
    }
}

fn strip_time(mut t: LowResourceTable) -> LowResourceTable {
    for c in &mut t.cells {
        c.result.test.wall_time_s = 0.0;
    }
    t
}

#[test]
fn single_seed_has_zero_std_and_oversized_requests_are_recorded() {
    let b = SyntheticBenchmark::generate(&SyntheticConfig::default(), 1).unwrap();
    let t = low_resource_sweep(&b.splits(), &[10, 5000, 20], &[4], &DetectorConfig::default(), Strategy::Parallel)
        .unwrap();
    assert_eq!(t.rows[0].std_f1, 0.0);
    assert!(t.rows[1].error.is_some() && t.rows[1].mean_f1.is_nan());
    assert!(t.rows[2].error.is_none());
}

#[test]
fn top_two_truncation_is_close_to_full() {
    for seed in 1..=4 {
        let p = planted_top_two(seed, 10);
        let s = p.splits();
        let rows = dimension_sweep(&s, &s.ks_train(), &[2, 10, 11], &DetectorConfig::default(), Strategy::Parallel)
            .unwrap();
        assert!((rows[0].f1 - rows[1].f1).abs() <= 0.02, "seed {seed}: {rows:?}");
        assert!(rows[2].note.is_some());
    }
}

#[test]
fn full_width_row_equals_plain_run() {
    let p = planted_top_two(5, 6);
    let s = p.splits();
    let shots = s.ks_train();
    let cfg = DetectorConfig::default();
    let rows = dimension_sweep(&s, &shots, &[6], &cfg, Strategy::Sequential).unwrap();
    let mut det = fit_detector(&s.nk_train(), &shots, &cfg).unwrap();
    det.select_threshold(s.dev).unwrap();
    let plain = evaluate(&det, s.test).unwrap();
    assert_eq!(rows[0].f1, plain.f1);
}

#[test]
fn every_estimator_handles_easy_clusters() {
    for seed in 0..3 {
        let p = easy_clusters(seed, 8);
        let s = p.splits();
        let names = ["gmm", "kde-gaussian", "kde-exponential", "lof"];
        let rows = estimator_comparison(&s, &s.ks_train(), &DetectorConfig::default(), &estimators(&names)).unwrap();
        for r in &rows {
            assert!(r.f1 >= 0.9, "seed {seed}: {r:?}");
            assert_eq!(r.test_rows, rows[0].test_rows);
        }
    }
}

#[test]
fn singleton_comparison_and_component_sweep_match_evaluate() {
    let p = easy_clusters(11, 5);
    let s = p.splits();
    let shots = s.ks_train();
    let cfg = DetectorConfig::default();
    let mut det = fit_detector(&s.nk_train(), &shots, &cfg).unwrap();
    det.select_threshold(s.dev).unwrap();
    let plain = evaluate(&det, s.test).unwrap();
    let cmp = estimator_comparison(&s, &shots, &cfg, &estimators(&["gmm"])).unwrap();
    assert_eq!((cmp[0].precision, cmp[0].recall, cmp[0].f1), (plain.precision, plain.recall, plain.f1));
    let k = component_sweep(&s, &shots, &cfg, &[1], Strategy::Sequential).unwrap();
    assert_eq!(k[0].test_f1, plain.f1);
}

#[test]
fn mixture_helps_bimodal_in_domain_data() {
    for seed in 0..3 {
        let p = bimodal_in_domain(seed, 4);
        let s = p.splits();
        let cfg = DetectorConfig {
            use_transform: false,
            ..DetectorConfig::default()
        };
        let rows = component_sweep(&s, &s.ks_train(), &cfg, &[1, 2, 3, 4], Strategy::Parallel).unwrap();
        assert!(rows[1].dev_f1 >= rows[0].dev_f1 - 0.02, "seed {seed}: {rows:?}");
        // EM can stop in a local optimum, so nesting only holds approximately.
        for w in rows.windows(2) {
            assert!(
                w[1].train_log_likelihood >= w[0].train_log_likelihood - 0.05,
                "seed {seed}: {rows:?}"
            );
        }
    }
}

#[test]
fn sweeps_are_deterministic_across_strategies() {
    let p = bimodal_in_domain(21, 3);
    let s = p.splits();
    let shots = s.ks_train();
    let cfg = DetectorConfig::default();
    assert_eq!(
        component_sweep(&s, &shots, &cfg, &[1, 2, 3], Strategy::Parallel).unwrap(),
        component_sweep(&s, &shots, &cfg, &[1, 2, 3], Strategy::Sequential).unwrap()
    );
    assert_eq!(
        dimension_sweep(&s, &shots, &[1, 2, 3], &cfg, Strategy::Parallel).unwrap(),
        dimension_sweep(&s, &shots, &[1, 2, 3], &cfg, Strategy::Sequential).unwrap()
    );
}
