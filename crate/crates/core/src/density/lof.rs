//! Local Outlier Factor in novelty mode: the fitted support is fixed and
//! queries are scored against it without joining it.
//!
//! Neighborhoods hold exactly `k` points (ties broken by support index).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::DensityScore;
use crate::error::{Error, Result};
use crate::par::{self, Strategy};

pub const DEFAULT_NEIGHBORS: usize = 20;
/// Mean reachability distances are floored here before taking reciprocals.
pub const REACH_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LofModel {
    n_neighbors: usize,
    support: Array2<f64>,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The `k` nearest `(distance, index)` pairs, optionally skipping one index.
fn nearest(support: &Array2<f64>, v: &[f64], k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = support
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, row)| (dist(row.as_slice().unwrap(), v), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    all
}

pub fn lof_fit(data: &Array2<f64>, n_neighbors: usize) -> Result<LofModel> {
    lof_fit_with(data, n_neighbors, Strategy::default())
}

pub fn lof_fit_with(data: &Array2<f64>, n_neighbors: usize, strategy: Strategy) -> Result<LofModel> {
    let n = data.nrows();
    if n_neighbors == 0 || n_neighbors >= n {
        return Err(Error::arg(format!(
            "LOF needs 1 <= n_neighbors < n, got n_neighbors = {n_neighbors}, n = {n}"
        )));
    }
    let support = data.as_standard_layout().into_owned();
    let neighborhoods = par::map_range(strategy, n, |i| {
        nearest(&support, support.row(i).as_slice().unwrap(), n_neighbors, Some(i))
    });
    let k_distance: Vec<f64> = neighborhoods.iter().map(|nb| nb[n_neighbors - 1].0).collect();
    let lrd = par::map_range(strategy, n, |i| local_reachability_density(&neighborhoods[i], &k_distance));
    Ok(LofModel {
        n_neighbors,
        support,
        k_distance,
        lrd,
    })
}

fn local_reachability_density(neighbors: &[(f64, usize)], k_distance: &[f64]) -> f64 {
    let mean_reach =
        neighbors.iter().map(|&(d, o)| d.max(k_distance[o])).sum::<f64>() / neighbors.len() as f64;
    1.0 / mean_reach.max(REACH_FLOOR)
}

impl LofModel {
    pub fn n_neighbors(&self) -> usize {
        self.n_neighbors
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    pub fn support_len(&self) -> usize {
        self.support.nrows()
    }

    /// LOF of `v` relative to the support; about 1 for inliers, larger for outliers.
    pub fn local_outlier_factor(&self, v: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim(), v.len())?;
        let nb = nearest(&self.support, v, self.n_neighbors, None);
        let lrd_v = local_reachability_density(&nb, &self.k_distance);
        Ok(nb.iter().map(|&(_, o)| self.lrd[o]).sum::<f64>() / (nb.len() as f64 * lrd_v))
    }

    /// `-LOF(v)`, so larger means more in-domain.
    pub fn score(&self, v: &[f64]) -> Result<DensityScore> {
        Ok(DensityScore(-self.local_outlier_factor(v)?))
    }
}
