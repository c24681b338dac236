//! Experiment runners. Each sweep is a grid of independent cells
//! (fit, calibrate on dev, evaluate on test); cells run through
//! [`par::map_range`] and results come back in grid order.

use ndarray::Array2;
use serde::Serialize;

use super::metrics::{evaluate_with, EvalReport};
use crate::dataset::{subsample, EmbeddingDataset, TurnLabel};
use crate::density::{EstimatorConfig, GmmConfig};
use crate::detector::{fit_detector, Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::par::{self, Strategy};
use crate::whitening::{fit_whitening, WhiteningTransform};

/// Train / dev / test splits. `train` holds the non-knowledge-seeking turns
/// the estimator is fitted on and the knowledge-seeking pool shots come from.
#[derive(Debug, Clone, Copy)]
pub struct Splits<'a> {
    pub train: &'a EmbeddingDataset,
    pub dev: &'a EmbeddingDataset,
    pub test: &'a EmbeddingDataset,
}

impl Splits<'_> {
    fn check(&self) -> Result<()> {
        let d = self.train.dim();
        Error::check_dim(d, self.dev.dim())?;
        Error::check_dim(d, self.test.dim())
    }

    pub fn nk_train(&self) -> Array2<f64> {
        self.train.features_with_label(TurnLabel::NonKnowledgeSeeking)
    }

    pub fn ks_train(&self) -> Array2<f64> {
        self.train.features_with_label(TurnLabel::KnowledgeSeeking)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    #[serde(with = "threshold_field")]
    pub threshold: f64,
    pub dev_f1: f64,
    pub test: EvalReport,
}

fn calibrate_and_test(mut det: Detector, splits: &Splits<'_>, strategy: Strategy) -> Result<CellResult> {
    let choice = det.select_threshold(splits.dev)?;
    let test = evaluate_with(&det, splits.test, strategy)?;
    Ok(CellResult {
        threshold: choice.threshold,
        dev_f1: choice.f1,
        test,
    })
}

/// One low-resource cell: `size` knowledge-seeking shots drawn with `seed`.
pub fn low_resource_cell(splits: &Splits<'_>, size: usize, seed: u64, cfg: &DetectorConfig) -> Result<CellResult> {
    splits.check()?;
    let sub = subsample(splits.train, TurnLabel::KnowledgeSeeking, size, seed)?;
    let shots = sub.features_with_label(TurnLabel::KnowledgeSeeking);
    let det = fit_detector(&splits.nk_train(), &shots, cfg)?;
    calibrate_and_test(det, splits, Strategy::Sequential)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowResourceRow {
    pub size: usize,
    pub seeds: usize,
    pub mean_f1: f64,
    /// Population standard deviation over seeds.
    pub std_f1: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowResourceCell {
    pub size: usize,
    pub seed: u64,
    pub result: CellResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowResourceTable {
    pub rows: Vec<LowResourceRow>,
    pub cells: Vec<LowResourceCell>,
}

pub fn low_resource_sweep(
    splits: &Splits<'_>,
    sizes: &[usize],
    seeds: &[u64],
    cfg: &DetectorConfig,
    strategy: Strategy,
) -> Result<LowResourceTable> {
    splits.check()?;
    if seeds.is_empty() {
        return Err(Error::arg("low-resource sweep needs at least one seed"));
    }
    let grid: Vec<(usize, u64)> = sizes.iter().flat_map(|&s| seeds.iter().map(move |&r| (s, r))).collect();
    let outcomes = par::map_range(strategy, grid.len(), |i| {
        let (size, seed) = grid[i];
        low_resource_cell(splits, size, seed, cfg)
    });

    let mut rows = Vec::with_capacity(sizes.len());
    let mut cells = Vec::new();
    for (si, &size) in sizes.iter().enumerate() {
        let chunk = &outcomes[si * seeds.len()..(si + 1) * seeds.len()];
        if let Some(Err(e)) = chunk.iter().find(|o| o.is_err()) {
            log::warn!("low-resource size {size} failed: {e}");
            rows.push(LowResourceRow {
                size,
                seeds: seeds.len(),
                mean_f1: f64::NAN,
                std_f1: f64::NAN,
                error: Some(e.to_string()),
            });
            continue;
        }
        let f1s: Vec<f64> = chunk.iter().map(|o| o.as_ref().unwrap().test.f1).collect();
        let (mean, std) = mean_and_population_std(&f1s);
        rows.push(LowResourceRow {
            size,
            seeds: seeds.len(),
            mean_f1: mean,
            std_f1: std,
            error: None,
        });
        for (seed, o) in seeds.iter().zip(chunk) {
            cells.push(LowResourceCell {
                size,
                seed: *seed,
                result: o.as_ref().unwrap().clone(),
            });
        }
    }
    Ok(LowResourceTable { rows, cells })
}

pub fn mean_and_population_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionRow {
    pub retained_dim: usize,
    pub dev_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub note: Option<String>,
}

/// Sweep the truncation width L. The whitening is fitted once on `shots`
/// (all d columns) and truncated per L; widths above d are skipped.
pub fn dimension_sweep(
    splits: &Splits<'_>,
    shots: &Array2<f64>,
    retained: &[usize],
    cfg: &DetectorConfig,
    strategy: Strategy,
) -> Result<Vec<DimensionRow>> {
    splits.check()?;
    let d = splits.train.dim();
    let full = fit_whitening(shots, d, cfg.eps_floor)?;
    let nk = splits.nk_train();
    let outcomes = par::map_range(strategy, retained.len(), |i| {
        let l = retained[i];
        if l == 0 || l > d {
            return Ok(None);
        }
        let t = full.truncated(l)?;
        let det = Detector::fit_with_transform_using(&nk, Some(t), cfg, Strategy::Sequential)?;
        calibrate_and_test(det, splits, Strategy::Sequential).map(Some)
    });
    retained
        .iter()
        .zip(outcomes)
        .map(|(&l, o)| {
            Ok(match o? {
                Some(c) => DimensionRow {
                    retained_dim: l,
                    dev_f1: c.dev_f1,
                    precision: c.test.precision,
                    recall: c.test.recall,
                    f1: c.test.f1,
                    note: None,
                },
                None => DimensionRow {
                    retained_dim: l,
                    dev_f1: f64::NAN,
                    precision: f64::NAN,
                    recall: f64::NAN,
                    f1: f64::NAN,
                    note: Some(format!("skipped: L = {l} outside 1..={d}")),
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRow {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub test_rows: usize,
    pub inference_seconds: f64,
}

/// Fitted transform shared by every estimator in a comparison, or `None`
/// for the zero-shot path.
fn shared_transform(shots: &Array2<f64>, d: usize, cfg: &DetectorConfig) -> Result<Option<WhiteningTransform>> {
    if cfg.use_transform && shots.nrows() > 0 {
        Ok(Some(fit_whitening(shots, cfg.retained_dim.min(d), cfg.eps_floor)?))
    } else {
        Ok(None)
    }
}

/// Compare estimators under one transform and one set of splits.
///
/// Cells run sequentially so the reported inference times are not skewed
/// by sharing cores.
pub fn estimator_comparison(
    splits: &Splits<'_>,
    shots: &Array2<f64>,
    base: &DetectorConfig,
    estimators: &[EstimatorConfig],
) -> Result<Vec<EstimatorRow>> {
    splits.check()?;
    let transform = shared_transform(shots, splits.train.dim(), base)?;
    let nk = splits.nk_train();
    estimators
        .iter()
        .map(|est| {
            let cfg = DetectorConfig {
                estimator: *est,
                ..*base
            };
            let det = Detector::fit_with_transform(&nk, transform.clone(), &cfg)?;
            let cell = calibrate_and_test(det, splits, Strategy::default())?;
            Ok(EstimatorRow {
                name: est.name(),
                precision: cell.test.precision,
                recall: cell.test.recall,
                f1: cell.test.f1,
                test_rows: cell.test.counts.total(),
                inference_seconds: cell.test.wall_time_s,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentRow {
    pub components: usize,
    pub dev_f1: f64,
    pub test_f1: f64,
    /// Mean per-sample log-likelihood of the (prepared) training turns.
    pub train_log_likelihood: f64,
}

/// GMM component-count sweep; other hyperparameters come from `base`
/// (or GMM defaults if `base` is not a mixture).
pub fn component_sweep(
    splits: &Splits<'_>,
    shots: &Array2<f64>,
    base: &DetectorConfig,
    components: &[usize],
    strategy: Strategy,
) -> Result<Vec<ComponentRow>> {
    splits.check()?;
    let gmm = match base.estimator {
        EstimatorConfig::Gmm(g) => g,
        _ => GmmConfig::default(),
    };
    let transform = shared_transform(shots, splits.train.dim(), base)?;
    let nk = splits.nk_train();
    par::map_range(strategy, components.len(), |i| {
        let cfg = DetectorConfig {
            estimator: EstimatorConfig::Gmm(GmmConfig {
                components: components[i],
                ..gmm
            }),
            ..*base
        };
        let det = Detector::fit_with_transform_using(&nk, transform.clone(), &cfg, Strategy::Sequential)?;
        let crate::density::DensityEstimator::Gmm(m) = det.estimator() else {
            unreachable!("configured a mixture")
        };
        let train_log_likelihood = *m.fit_log_likelihood_trace().last().expect("trace is never empty");
        let cell = calibrate_and_test(det, splits, Strategy::Sequential)?;
        Ok(ComponentRow {
            components: components[i],
            dev_f1: cell.dev_f1,
            test_f1: cell.test.f1,
            train_log_likelihood,
        })
    })
    .into_iter()
    .collect()
}

mod threshold_field {
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}
