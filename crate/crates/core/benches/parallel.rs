use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rede::dataset::TurnLabel;
use rede::density::{gmm_fit_with, lof_fit_with, GmmConfig};
use rede::detector::{fit_detector, DetectorConfig};
use rede::eval::low_resource_sweep;
use rede::synthetic::{SyntheticBenchmark, SyntheticConfig};
use rede::Strategy;

const STRATEGIES: [(&str, Strategy); 2] = [("sequential", Strategy::Sequential), ("parallel", Strategy::Parallel)];

fn bench(c: &mut Criterion) {
    let cfg = SyntheticConfig {
        dim: 64,
        high_dims: 8,
        ..SyntheticConfig::default()
    };
    let b = SyntheticBenchmark::generate(&cfg, 1).unwrap();
    let nk = b.train.features_with_label(TurnLabel::NonKnowledgeSeeking);
    let shots = b.train.features_with_label(TurnLabel::KnowledgeSeeking);
    let det = fit_detector(&nk, &shots, &DetectorConfig::default()).unwrap();
    let test = b.test.features();

    let mut g = c.benchmark_group("score_rows");
    for (name, s) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &s, |bch, &s| {
            bch.iter(|| det.score_rows(&test, s).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("gmm_fit_k4");
    g.sample_size(10);
    let gmm = GmmConfig {
        components: 4,
        ..GmmConfig::default()
    };
    for (name, s) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &s, |bch, &s| {
            bch.iter(|| gmm_fit_with(&nk, &gmm, s).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("lof_fit");
    g.sample_size(10);
    for (name, s) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &s, |bch, &s| {
            bch.iter(|| lof_fit_with(&nk, 20, s).unwrap())
        });
    }
    g.finish();

    let small = SyntheticBenchmark::generate(&SyntheticConfig::default(), 2).unwrap();
    let mut g = c.benchmark_group("low_resource_sweep");
    g.sample_size(10);
    for (name, s) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &s, |bch, &s| {
            bch.iter(|| {
                low_resource_sweep(&small.splits(), &[5, 10, 50], &[1, 2, 3], &DetectorConfig::default(), s).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
