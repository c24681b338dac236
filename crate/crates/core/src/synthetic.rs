//! Seeded synthetic benchmark.
//!
//! In-domain (non-knowledge-seeking) turns are anisotropic Gaussians centred
//! at `m·u`; out-of-domain turns sit at `(m+Δ)·u` with every axis stretched by
//! `(m+Δ)/m`. After unit normalization both classes point the same way on
//! average, so raw-space density separates them poorly, while the few-shot
//! whitening exposes the stretched low-variance directions.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{EmbeddingDataset, TurnLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub dim: usize,
    /// Number of leading high-variance axes (before rotation).
    pub high_dims: usize,
    pub high_scale: f64,
    pub low_scale: f64,
    /// In-domain centre magnitude `m`.
    pub offset: f64,
    /// Extra offset `Δ` of the out-of-domain centre.
    pub shift: f64,
    pub train_nk: usize,
    /// Knowledge-seeking pool stored in the train split for shot sampling.
    pub train_ks: usize,
    pub dev_per_class: usize,
    pub test_per_class: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 20,
            high_dims: 5,
            high_scale: 3.0,
            low_scale: 0.3,
            offset: 5.0,
            shift: 5.0,
            train_nk: 2000,
            train_ks: 200,
            dev_per_class: 500,
            test_per_class: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub train: EmbeddingDataset,
    pub dev: EmbeddingDataset,
    pub test: EmbeddingDataset,
}

struct Generator {
    rng: ChaCha8Rng,
    rotation: Array2<f64>,
    scales: Array1<f64>,
    direction: Array1<f64>,
    cfg: SyntheticConfig,
}

impl Generator {
    fn new(cfg: SyntheticConfig, seed: u64) -> Self {
        let d = cfg.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rotation = random_orthogonal(d, &mut rng);
        let scales = Array1::from_shape_fn(d, |i| if i < cfg.high_dims { cfg.high_scale } else { cfg.low_scale });
        let mut direction = Array1::<f64>::zeros(d);
        for j in cfg.high_dims..d {
            let g: f64 = StandardNormal.sample(&mut rng);
            direction.scaled_add(g, &rotation.column(j));
        }
        let n = direction.dot(&direction).sqrt();
        direction /= n;
        Generator {
            rng,
            rotation,
            scales,
            direction,
            cfg,
        }
    }

    fn sample(&mut self, n: usize, ood: bool) -> Array2<f64> {
        let d = self.cfg.dim;
        let (centre, stretch) = if ood {
            let c = self.cfg.offset + self.cfg.shift;
            (c, c / self.cfg.offset)
        } else {
            (self.cfg.offset, 1.0)
        };
        let z = Array2::from_shape_fn((n, d), |(_, j)| {
            let g: f64 = StandardNormal.sample(&mut self.rng);
            g * self.scales[j] * stretch
        });
        let mut x = z.dot(&self.rotation.t());
        for mut row in x.rows_mut() {
            row.scaled_add(centre, &self.direction);
        }
        x
    }

    fn split(&mut self, name: &str, nk: usize, ks: usize) -> Result<EmbeddingDataset> {
        let a = self.sample(nk, false);
        let b = self.sample(ks, true);
        let x = ndarray::concatenate(ndarray::Axis(0), &[a.view(), b.view()])
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let mut ids = Vec::with_capacity(nk + ks);
        let mut labels = Vec::with_capacity(nk + ks);
        for i in 0..nk {
            ids.push(format!("{name}-nk-{i}"));
            labels.push(TurnLabel::NonKnowledgeSeeking);
        }
        for i in 0..ks {
            ids.push(format!("{name}-ks-{i}"));
            labels.push(TurnLabel::KnowledgeSeeking);
        }
        EmbeddingDataset::from_f64(ids, labels, &x)
    }
}

/// Orthogonal matrix from modified Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q: Array2<f64> = Array2::from_shape_fn((d, d), |_| StandardNormal.sample(&mut *rng));
    for j in 0..d {
        for k in 0..j {
            let p: f64 = q.column(k).dot(&q.column(j));
            let (qk, mut qj) = (q.column(k).to_owned(), q.column_mut(j));
            qj.scaled_add(-p, &qk);
        }
        let n = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / n);
    }
    q
}

impl SyntheticBenchmark {
    pub fn generate(cfg: &SyntheticConfig, seed: u64) -> Result<Self> {
        if cfg.dim == 0 || cfg.high_dims >= cfg.dim || cfg.offset <= 0.0 {
            return Err(Error::arg("synthetic config needs 0 <= high_dims < dim and offset > 0"));
        }
        let mut g = Generator::new(*cfg, seed);
        Ok(SyntheticBenchmark {
            train: g.split("train", cfg.train_nk, cfg.train_ks)?,
            dev: g.split("dev", cfg.dev_per_class, cfg.dev_per_class)?,
            test: g.split("test", cfg.test_per_class, cfg.test_per_class)?,
        })
    }

    pub fn splits(&self) -> crate::eval::Splits<'_> {
        crate::eval::Splits {
            train: &self.train,
            dev: &self.dev,
            test: &self.test,
        }
    }
}
