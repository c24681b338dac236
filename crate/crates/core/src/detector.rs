//! The full detection pipeline: optional whitening fitted on
//! knowledge-seeking shots, unit normalization, a density estimator fitted
//! on non-knowledge-seeking turns, and a score threshold.
//!
//! A turn scoring at or above the threshold is classified non-knowledge-seeking.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingDataset, TurnLabel};
use crate::density::{DensityEstimator, DensityScore, EstimatorConfig};
use crate::error::{Error, Result};
use crate::par::{self, Strategy};
use crate::whitening::{self, fit_whitening, WhiteningTransform, DEFAULT_EPS_FLOOR};

pub const DEFAULT_RETAINED_DIM: usize = 650;
pub const MODEL_FORMAT: &str = "rede-detector";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub estimator: EstimatorConfig,
    /// Whitened dimensions kept (L); clamped to the embedding dimension.
    pub retained_dim: usize,
    pub eps_floor: f64,
    pub use_transform: bool,
    pub normalize: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorConfig::default(),
            retained_dim: DEFAULT_RETAINED_DIM,
            eps_floor: DEFAULT_EPS_FLOOR,
            use_transform: true,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Detector {
    config: DetectorConfig,
    input_dim: usize,
    transform: Option<WhiteningTransform>,
    estimator: DensityEstimator,
    #[serde(with = "threshold_serde")]
    threshold: Option<f64>,
}

/// Result of threshold calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdChoice {
    #[serde(with = "threshold_serde::required")]
    pub threshold: f64,
    pub f1: f64,
}

/// Fit the pipeline. With no shots (or `use_transform = false`) the
/// whitening step is skipped and the estimator sees normalized raw embeddings.
pub fn fit_detector(nk_train: &Array2<f64>, ks_shots: &Array2<f64>, cfg: &DetectorConfig) -> Result<Detector> {
    if ks_shots.nrows() > 0 {
        Error::check_dim(nk_train.ncols(), ks_shots.ncols())?;
    }
    let transform = if cfg.use_transform && ks_shots.nrows() > 0 {
        let l = cfg.retained_dim.min(ks_shots.ncols());
        Some(fit_whitening(ks_shots, l, cfg.eps_floor)?)
    } else {
        None
    };
    Detector::fit_with_transform(nk_train, transform, cfg)
}

impl Detector {
    /// Fit the estimator on `nk_train` using an already fitted (or absent) transform.
    pub fn fit_with_transform(
        nk_train: &Array2<f64>,
        transform: Option<WhiteningTransform>,
        cfg: &DetectorConfig,
    ) -> Result<Self> {
        Self::fit_with_transform_using(nk_train, transform, cfg, Strategy::default())
    }

    pub fn fit_with_transform_using(
        nk_train: &Array2<f64>,
        transform: Option<WhiteningTransform>,
        cfg: &DetectorConfig,
        strategy: Strategy,
    ) -> Result<Self> {
        if nk_train.nrows() == 0 {
            return Err(Error::arg("detector needs at least one non-knowledge-seeking training turn"));
        }
        if let Some(t) = &transform {
            Error::check_dim(t.dim(), nk_train.ncols())?;
        }
        let features = prepare_rows(transform.as_ref(), cfg.normalize, nk_train, strategy);
        let estimator = cfg.estimator.fit(&features, strategy)?;
        Ok(Detector {
            config: *cfg,
            input_dim: nk_train.ncols(),
            transform,
            estimator,
            threshold: None,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn transform(&self) -> Option<&WhiteningTransform> {
        self.transform.as_ref()
    }

    pub fn estimator(&self) -> &DensityEstimator {
        &self.estimator
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        if threshold.is_nan() {
            return Err(Error::arg("threshold must not be NaN"));
        }
        self.threshold = Some(threshold);
        Ok(())
    }

    /// The vector the estimator sees: transformed (if fitted) then normalized.
    pub fn prepare(&self, e: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.input_dim, e.len())?;
        Ok(prepare_vector(self.transform.as_ref(), self.config.normalize, e))
    }

    pub fn score(&self, e: &[f64]) -> Result<DensityScore> {
        let v = self.prepare(e)?;
        let s = self.estimator.score(&v)?;
        if !s.value().is_finite() {
            return Err(Error::Numerical(format!("non-finite density score {}", s.value())));
        }
        Ok(s)
    }

    /// Scores of every row, bit-identical to calling [`score`](Self::score) per row.
    pub fn score_rows(&self, rows: &Array2<f64>, strategy: Strategy) -> Result<Vec<f64>> {
        Error::check_dim(self.input_dim, rows.ncols())?;
        par::map_range(strategy, rows.nrows(), |i| self.score(&rows.row(i).to_vec()).map(DensityScore::value))
            .into_iter()
            .collect()
    }

    pub fn score_dataset(&self, ds: &EmbeddingDataset, strategy: Strategy) -> Result<Vec<f64>> {
        self.score_rows(&ds.features(), strategy)
    }

    /// Choose and store the threshold maximizing knowledge-seeking F1 on `dev`.
    pub fn select_threshold(&mut self, dev: &EmbeddingDataset) -> Result<ThresholdChoice> {
        let labeled: Vec<usize> = (0..dev.len()).filter(|&i| dev.labels()[i].is_labeled()).collect();
        let dev = dev.select(&labeled);
        let scores = self.score_dataset(&dev, Strategy::default())?;
        let positive: Vec<bool> = dev.labels().iter().map(|&l| l == TurnLabel::KnowledgeSeeking).collect();
        let choice = best_threshold(&scores, &positive)?;
        self.threshold = Some(choice.threshold);
        Ok(choice)
    }

    pub fn predict(&self, e: &[f64]) -> Result<TurnLabel> {
        let threshold = self.threshold.ok_or_else(|| {
            Error::State("detector threshold is not calibrated; run threshold selection first".into())
        })?;
        Ok(classify(self.score(e)?.value(), threshold))
    }

    pub fn parameters(&self) -> ParameterReport {
        let (full, diagonal) = match &self.estimator {
            DensityEstimator::Gmm(m) => (m.parameter_count(), m.diagonal_parameter_count()),
            other => (other.stored_values(), other.stored_values()),
        };
        let transform_derived = self.transform.as_ref().map_or(0, |t| t.dim() + t.dim() * t.retained());
        ParameterReport {
            estimator: self.config.estimator.name(),
            estimator_dim: self.estimator.dim(),
            estimator_full_covariance: full,
            estimator_diagonal_covariance: diagonal,
            transform_derived,
        }
    }
}

/// `e` must already match the transform's input dimension.
fn prepare_vector(transform: Option<&WhiteningTransform>, normalize: bool, e: &[f64]) -> Vec<f64> {
    let mut v = match transform {
        Some(t) => t.apply(e).expect("dimension checked by caller"),
        None => e.to_vec(),
    };
    if normalize {
        whitening::unit_normalize(&mut v);
    }
    v
}

fn prepare_rows(
    transform: Option<&WhiteningTransform>,
    normalize: bool,
    rows: &Array2<f64>,
    strategy: Strategy,
) -> Array2<f64> {
    let out_dim = transform.map_or(rows.ncols(), |t| t.retained());
    let prepared = par::map_range(strategy, rows.nrows(), |i| {
        prepare_vector(transform, normalize, &rows.row(i).to_vec())
    });
    let mut m = Array2::zeros((rows.nrows(), out_dim));
    for (i, v) in prepared.into_iter().enumerate() {
        m.row_mut(i).assign(&ndarray::ArrayView1::from(&v));
    }
    m
}

/// Score-to-label rule: `score >= threshold` is non-knowledge-seeking.
pub fn classify(score: f64, threshold: f64) -> TurnLabel {
    if score >= threshold {
        TurnLabel::NonKnowledgeSeeking
    } else {
        TurnLabel::KnowledgeSeeking
    }
}

/// What the `params` diagnostic counts.
///
/// `estimator_full_covariance` counts the fitted estimator as stored
/// (mixture: k (1 + L + L(L+1)/2)); `estimator_diagonal_covariance` is the
/// count a diagonal mixture of the same shape would need. The whitening
/// statistics (mu: d, W: d x L) are reported separately as
/// `transform_derived` since they are computed in closed form from the shots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParameterReport {
    pub estimator: String,
    pub estimator_dim: usize,
    pub estimator_full_covariance: usize,
    pub estimator_diagonal_covariance: usize,
    pub transform_derived: usize,
}

/// Exhaustive threshold search maximizing F1 of the positive class
/// (predicted positive when `score < threshold`).
///
/// Candidates are `-inf`, the midpoints between adjacent distinct scores,
/// and `+inf`. Ties in F1 go to the largest threshold.
pub fn best_threshold(scores: &[f64], positive: &[bool]) -> Result<ThresholdChoice> {
    if scores.len() != positive.len() {
        return Err(Error::arg(format!(
            "{} scores but {} labels",
            scores.len(),
            positive.len()
        )));
    }
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 || total_pos == scores.len() {
        return Err(Error::arg(
            "threshold selection needs both knowledge-seeking and non-knowledge-seeking rows",
        ));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!("non-finite score {bad} in threshold selection")));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let f1 = |tp: usize, predicted: usize| {
        if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (predicted + total_pos) as f64
        }
    };

    let mut best = ThresholdChoice {
        threshold: f64::NEG_INFINITY,
        f1: 0.0,
    };
    let mut tp = 0;
    let mut predicted = 0;
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        while i < order.len() && scores[order[i]] == value {
            predicted += 1;
            tp += usize::from(positive[order[i]]);
            i += 1;
        }
        let threshold = match order.get(i) {
            Some(&next) => midpoint(value, scores[next]),
            None => f64::INFINITY,
        };
        let f = f1(tp, predicted);
        if f >= best.f1 {
            best = ThresholdChoice { threshold, f1: f };
        }
    }
    Ok(best)
}

/// A threshold strictly above `lo` and at most `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo / 2.0 + hi / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

#[derive(Deserialize)]
struct BundleHeader {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct Bundle {
    format: String,
    version: u32,
    detector: Detector,
}

/// Write the detector as a single versioned JSON bundle.
pub fn save_model(det: &Detector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bundle = Bundle {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        detector: det.clone(),
    };
    let text = serde_json::to_string(&bundle)
        .map_err(|e| Error::Numerical(format!("cannot serialize detector: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Detector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |e: serde_json::Error| Error::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let header: BundleHeader = serde_json::from_str(&text).map_err(corrupt)?;
    if header.format != MODEL_FORMAT {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            reason: format!("not a detector bundle (format {:?})", header.format),
        });
    }
    if header.version != MODEL_VERSION {
        return Err(Error::Incompatible {
            found: header.version,
            expected: MODEL_VERSION,
        });
    }
    let bundle: Bundle = serde_json::from_str(&text).map_err(corrupt)?;
    Ok(bundle.detector)
}

/// JSON has no infinities: thresholds are stored as numbers, `"inf"`, `"-inf"`, or null.
mod threshold_serde {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Special(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v == f64::INFINITY {
            Repr::Special("inf".into())
        } else if v == f64::NEG_INFINITY {
            Repr::Special("-inf".into())
        } else {
            Repr::Finite(v)
        }
    }

    fn from_repr<E: de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Finite(v) => Ok(v),
            Repr::Special(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Special(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Special(s) => Err(E::custom(format!("invalid threshold {s:?}"))),
        }
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(to_repr).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<Repr>::deserialize(d)?.map(from_repr).transpose()
    }

    pub mod required {
        use super::*;

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            to_repr(*v).serialize(s)
        }
    }
}
