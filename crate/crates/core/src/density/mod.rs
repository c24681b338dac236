//! Shallow density estimators over transformed, normalized embeddings.
//!
//! Every estimator reports a [`DensityScore`] where larger means "more
//! in-domain": log-density for the mixture and KDE, negated LOF for LOF.

mod gmm;
mod kde;
mod lof;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use gmm::{gmm_fit, gmm_fit_with, GaussianMixture, GmmConfig, DEFAULT_COV_REG, DEFAULT_MAX_ITER, DEFAULT_TOL};
pub use kde::{kde_fit, KdeKernel, KdeModel, DEFAULT_BANDWIDTH};
pub use lof::{lof_fit, lof_fit_with, LofModel, DEFAULT_NEIGHBORS, REACH_FLOOR};

use crate::error::{Error, Result};
use crate::par::{self, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DensityScore(pub f64);

impl DensityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Numerically stable `ln sum exp(x_i)`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Estimator kind plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorConfig {
    Gmm(GmmConfig),
    Kde { kernel: KdeKernel, bandwidth: f64 },
    Lof { n_neighbors: usize },
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig::Gmm(GmmConfig::default())
    }
}

impl EstimatorConfig {
    /// `gmm`, `kde-gaussian`, `kde-exponential` or `lof`.
    pub fn name(&self) -> String {
        match self {
            EstimatorConfig::Gmm(_) => "gmm".into(),
            EstimatorConfig::Kde { kernel, .. } => format!("kde-{kernel}"),
            EstimatorConfig::Lof { .. } => "lof".into(),
        }
    }

    pub fn fit(&self, data: &Array2<f64>, strategy: Strategy) -> Result<DensityEstimator> {
        Ok(match *self {
            EstimatorConfig::Gmm(cfg) => DensityEstimator::Gmm(gmm_fit_with(data, &cfg, strategy)?),
            EstimatorConfig::Kde { kernel, bandwidth } => DensityEstimator::Kde(kde_fit(data, kernel, bandwidth)?),
            EstimatorConfig::Lof { n_neighbors } => DensityEstimator::Lof(lof_fit_with(data, n_neighbors, strategy)?),
        })
    }
}

impl FromStr for EstimatorConfig {
    type Err = Error;

    /// Kind name with default hyperparameters.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmm" => Ok(EstimatorConfig::default()),
            "kde-gaussian" => Ok(EstimatorConfig::Kde {
                kernel: KdeKernel::Gaussian,
                bandwidth: DEFAULT_BANDWIDTH,
            }),
            "kde-exponential" => Ok(EstimatorConfig::Kde {
                kernel: KdeKernel::Exponential,
                bandwidth: DEFAULT_BANDWIDTH,
            }),
            "lof" => Ok(EstimatorConfig::Lof {
                n_neighbors: DEFAULT_NEIGHBORS,
            }),
            other => Err(Error::arg(format!(
                "unknown estimator {other:?} (expected gmm, kde-gaussian, kde-exponential or lof)"
            ))),
        }
    }
}

impl fmt::Display for EstimatorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "kebab-case")]
pub enum DensityEstimator {
    Gmm(GaussianMixture),
    Kde(KdeModel),
    Lof(LofModel),
}

impl DensityEstimator {
    pub fn dim(&self) -> usize {
        match self {
            DensityEstimator::Gmm(m) => m.dim(),
            DensityEstimator::Kde(m) => m.dim(),
            DensityEstimator::Lof(m) => m.dim(),
        }
    }

    pub fn score(&self, v: &[f64]) -> Result<DensityScore> {
        match self {
            DensityEstimator::Gmm(m) => m.score(v),
            DensityEstimator::Kde(m) => m.score(v),
            DensityEstimator::Lof(m) => m.score(v),
        }
    }

    pub fn score_rows(&self, rows: &Array2<f64>, strategy: Strategy) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), rows.ncols())?;
        par::map_range(strategy, rows.nrows(), |i| {
            self.score(&rows.row(i).to_vec()).map(DensityScore::value)
        })
        .into_iter()
        .collect()
    }

    /// Stored values: mixture parameters, or the support matrix for KDE/LOF.
    pub fn stored_values(&self) -> usize {
        match self {
            DensityEstimator::Gmm(m) => m.parameter_count(),
            DensityEstimator::Kde(m) => m.support_len() * m.dim(),
            DensityEstimator::Lof(m) => m.support_len() * m.dim(),
        }
    }
}
