//! Whitening transform fitted on knowledge-seeking (out-of-domain) samples.
//!
//! `T(e) = (e - mu) W` with `W = U diag(1 / sqrt(lambda))`, where
//! `Sigma = U diag(lambda) U^T` is the 1/M covariance of the fit samples.
//! Only the first `L` columns (largest eigenvalues) are applied, which makes
//! the truncated map a PCA projection followed by per-axis rescaling.
//!
//! Few-shot fits are rank deficient (rank <= M - 1), so eigenvalues below
//! `eps_floor * lambda_max` are raised to that floor before inversion.

use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingDataset, TurnLabel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::par::{self, Strategy};

pub const DEFAULT_EPS_FLOOR: f64 = 1e-6;
/// Absolute floor used when every eigenvalue is zero (identical samples).
pub const ZERO_SPECTRUM_FLOOR: f64 = 1e-12;
/// Norms at or below this are treated as zero by [`unit_normalize`].
pub const ZERO_NORM: f64 = 1e-12;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningTransform {
    mean: Vec<f64>,
    /// d x d; column j is `u_j / sqrt(max(lambda_j, floor))`, descending lambda.
    basis: Array2<f64>,
    /// Covariance spectrum before flooring, descending, clamped at 0.
    eigenvalues: Vec<f64>,
    retained: usize,
    eps_floor: f64,
}

/// Fit the whitening map on `samples` (one row per knowledge-seeking turn).
pub fn fit_whitening(samples: &Array2<f64>, retained: usize, eps_floor: f64) -> Result<WhiteningTransform> {
    let m = samples.nrows();
    let d = samples.ncols();
    if m == 0 {
        return Err(Error::arg(
            "whitening requires at least one out-of-domain sample",
        ));
    }
    if retained == 0 || retained > d {
        return Err(Error::arg(format!(
            "retained dimension L = {retained} must be in 1..={d}"
        )));
    }
    if !(eps_floor > 0.0 && eps_floor.is_finite()) {
        return Err(Error::arg(format!("eps_floor must be positive, got {eps_floor}")));
    }

    let mut mean = vec![0.0; d];
    for row in samples.rows() {
        for (acc, &v) in mean.iter_mut().zip(row.iter()) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }

    let mut centered = samples.clone();
    for mut row in centered.rows_mut() {
        for (x, mu) in row.iter_mut().zip(&mean) {
            *x -= mu;
        }
    }
    let mut cov = centered.t().dot(&centered);
    cov /= m as f64;
    // GEMM blocking can leave last-bit asymmetry; keep the upper triangle.
    for i in 0..d {
        for j in (i + 1)..d {
            cov[[j, i]] = cov[[i, j]];
        }
    }
    let asym = linalg::max_asymmetry(&cov);
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::Numerical(format!(
            "covariance is not symmetric (max |S - S^T| = {asym:e})"
        )));
    }

    let eig = linalg::symmetric_eigen(&cov)?;
    let eigenvalues: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    let lambda_max = eigenvalues[0];
    let floor = if lambda_max > 0.0 {
        eps_floor * lambda_max
    } else {
        ZERO_SPECTRUM_FLOOR
    };
    let mut basis = eig.vectors;
    for (j, &lambda) in eigenvalues.iter().enumerate() {
        let scale = 1.0 / lambda.max(floor).sqrt();
        basis.column_mut(j).mapv_inplace(|u| u * scale);
    }
    if basis.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("whitening matrix has non-finite entries".into()));
    }

    Ok(WhiteningTransform {
        mean,
        basis,
        eigenvalues,
        retained,
        eps_floor,
    })
}

impl WhiteningTransform {
    /// Input dimension d.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Output dimension L.
    pub fn retained(&self) -> usize {
        self.retained
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eps_floor(&self) -> f64 {
        self.eps_floor
    }

    /// The applied d x L matrix W.
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.basis.slice(s![.., ..self.retained])
    }

    /// Number of eigenvalues that were raised to the floor.
    pub fn floored_count(&self) -> usize {
        let lambda_max = self.eigenvalues[0];
        let floor = if lambda_max > 0.0 {
            self.eps_floor * lambda_max
        } else {
            ZERO_SPECTRUM_FLOOR
        };
        self.eigenvalues.iter().filter(|&&l| l < floor).count()
    }

    /// Same fit with a different truncation width; nothing is recomputed.
    pub fn truncated(&self, retained: usize) -> Result<Self> {
        if retained == 0 || retained > self.dim() {
            return Err(Error::arg(format!(
                "retained dimension L = {retained} must be in 1..={}",
                self.dim()
            )));
        }
        let mut t = self.clone();
        t.retained = retained;
        Ok(t)
    }

    /// `(e - mu) W`, length L.
    pub fn apply(&self, e: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), e.len())?;
        let mut out = vec![0.0; self.retained];
        for (i, (&x, &mu)) in e.iter().zip(&self.mean).enumerate() {
            let c = x - mu;
            if c == 0.0 {
                continue;
            }
            let row = self.basis.row(i);
            let row = row.as_slice().expect("basis is standard layout");
            for (o, &w) in out.iter_mut().zip(&row[..self.retained]) {
                *o += c * w;
            }
        }
        Ok(out)
    }

    /// Row-wise [`apply`](Self::apply); identical results to the single-vector path.
    pub fn apply_rows(&self, rows: &Array2<f64>, strategy: Strategy) -> Result<Array2<f64>> {
        Error::check_dim(self.dim(), rows.ncols())?;
        let out = par::map_range(strategy, rows.nrows(), |i| {
            let row = rows.row(i).to_vec();
            self.apply(&row).expect("dimension checked")
        });
        let mut m = Array2::zeros((rows.nrows(), self.retained));
        for (i, v) in out.into_iter().enumerate() {
            m.row_mut(i).assign(&ndarray::ArrayView1::from(&v));
        }
        Ok(m)
    }
}

/// Scale `v` to unit Euclidean norm in place.
///
/// Returns `false` (and leaves `v` untouched) when `||v|| <= 1e-12`.
pub fn unit_normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= ZERO_NORM {
        log::warn!("zero-norm vector left unnormalized (norm = {norm:e})");
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}

/// One row of a 2-D scatter export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectedPoint {
    pub id: String,
    pub label: TurnLabel,
    pub c1: f64,
    pub c2: f64,
}

/// Top-two transformed coordinates for every row of `ds`.
pub fn project_2d(t: &WhiteningTransform, ds: &EmbeddingDataset) -> Result<Vec<ProjectedPoint>> {
    Error::check_dim(t.dim(), ds.dim())?;
    let two = t.truncated(2.min(t.dim()))?;
    if two.retained() < 2 {
        return Err(Error::arg("2-D projection needs an input dimension of at least 2"));
    }
    (0..ds.len())
        .map(|i| {
            let v = two.apply(&ds.row_f64(i))?;
            Ok(ProjectedPoint {
                id: ds.ids()[i].clone(),
                label: ds.labels()[i],
                c1: v[0],
                c2: v[1],
            })
        })
        .collect()
}

/// CSV with header `id,label,c1,c2`; unlabeled rows get an empty label.
pub fn write_projection_csv(points: &[ProjectedPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(["id", "label", "c1", "c2"]).map_err(io)?;
    for p in points {
        w.write_record([
            p.id.as_str(),
            p.label.code().unwrap_or(""),
            &p.c1.to_string(),
            &p.c2.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
