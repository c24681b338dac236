//! Few-shot detection of knowledge-seeking dialogue turns.
//!
//! Embeddings are whitened with a transform fitted on a handful of
//! knowledge-seeking examples, unit-normalized, and scored by a density
//! model fitted on ordinary (non-knowledge-seeking) turns. Low density
//! means knowledge-seeking.

pub mod dataset;
pub mod density;
pub mod detector;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod par;
pub mod synthetic;
pub mod whitening;

pub use dataset::{load_dataset, save_dataset, DatasetFormat, EmbeddingDataset, TurnLabel};
pub use density::{DensityEstimator, DensityScore, EstimatorConfig};
pub use detector::{fit_detector, load_model, save_model, Detector, DetectorConfig};
pub use error::{Error, Result};
pub use par::Strategy;
pub use whitening::{fit_whitening, WhiteningTransform};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
