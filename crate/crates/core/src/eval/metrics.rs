use std::time::Instant;

use serde::Serialize;

use crate::dataset::{EmbeddingDataset, TurnLabel};
use crate::detector::{classify, Detector};
use crate::error::{Error, Result};
use crate::par::Strategy;

/// Confusion counts with knowledge-seeking as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    /// Count labeled pairs; unlabeled truths are ignored.
    pub fn from_labels(truth: &[TurnLabel], predicted: &[TurnLabel]) -> Self {
        let mut c = ConfusionCounts::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            let pos_truth = match t {
                TurnLabel::KnowledgeSeeking => true,
                TurnLabel::NonKnowledgeSeeking => false,
                TurnLabel::Unlabeled => continue,
            };
            let pos_pred = p == TurnLabel::KnowledgeSeeking;
            match (pos_pred, pos_truth) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// 0 when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
    pub skipped_unlabeled: usize,
    /// Seconds spent scoring the test rows.
    pub wall_time_s: f64,
}

impl EvalReport {
    pub fn from_counts(counts: ConfusionCounts, skipped_unlabeled: usize, wall_time_s: f64) -> Self {
        Self {
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            counts,
            skipped_unlabeled,
            wall_time_s,
        }
    }
}

/// Score every labeled row of `test` and compare predictions to labels.
pub fn evaluate(det: &Detector, test: &EmbeddingDataset) -> Result<EvalReport> {
    evaluate_with(det, test, Strategy::default())
}

pub fn evaluate_with(det: &Detector, test: &EmbeddingDataset, strategy: Strategy) -> Result<EvalReport> {
    let threshold = det
        .threshold()
        .ok_or_else(|| Error::State("cannot evaluate an uncalibrated detector".into()))?;
    let labeled: Vec<usize> = (0..test.len()).filter(|&i| test.labels()[i].is_labeled()).collect();
    let skipped = test.len() - labeled.len();
    if skipped > 0 {
        log::info!("evaluation skipped {skipped} unlabeled rows");
    }
    let rows = test.select(&labeled);
    let start = Instant::now();
    let scores = det.score_dataset(&rows, strategy)?;
    let elapsed = start.elapsed().as_secs_f64();
    let predicted: Vec<TurnLabel> = scores.iter().map(|&s| classify(s, threshold)).collect();
    let counts = ConfusionCounts::from_labels(rows.labels(), &predicted);
    Ok(EvalReport::from_counts(counts, skipped, elapsed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formula_example() {
        let c = ConfusionCounts { tp: 3, fp: 1, fn_: 2, tn: 0 };
        assert_eq!(c.precision(), 0.75);
        assert_eq!(c.recall(), 0.6);
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_positive_predictions() {
        let c = ConfusionCounts { tp: 0, fp: 0, fn_: 4, tn: 3 };
        assert_eq!((c.precision(), c.f1()), (0.0, 0.0));
    }

    fn label(ks: bool) -> TurnLabel {
        if ks {
            TurnLabel::KnowledgeSeeking
        } else {
            TurnLabel::NonKnowledgeSeeking
        }
    }

    proptest! {
        #[test]
        fn metrics_match_naive_counting(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
            let truth: Vec<TurnLabel> = pairs.iter().map(|p| label(p.0)).collect();
            let pred: Vec<TurnLabel> = pairs.iter().map(|p| label(p.1)).collect();
            let c = ConfusionCounts::from_labels(&truth, &pred);
            prop_assert_eq!(c.total(), pairs.len());
            let tp = pairs.iter().filter(|p| p.0 && p.1).count() as f64;
            let pp = pairs.iter().filter(|p| p.1).count() as f64;
            let ap = pairs.iter().filter(|p| p.0).count() as f64;
            let p = if pp > 0.0 { tp / pp } else { 0.0 };
            let r = if ap > 0.0 { tp / ap } else { 0.0 };
            prop_assert_eq!(c.precision(), p);
            prop_assert_eq!(c.recall(), r);
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            prop_assert!((c.f1() - f).abs() < 1e-15);
            // harmonic mean equals 2tp / (2tp + fp + fn)
            let alt = if tp > 0.0 { 2.0 * tp / (pp + ap) } else { 0.0 };
            prop_assert!((c.f1() - alt).abs() < 1e-12);
        }
    }
}
