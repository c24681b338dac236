//! Full-covariance Gaussian mixture fitted by EM.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{log_sum_exp, DensityScore};
use crate::error::{Error, Result};
use crate::linalg;
use crate::par::{self, Strategy};

pub const DEFAULT_COV_REG: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 100;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Added to every soft count so empty components keep a finite mean.
const COUNT_EPS: f64 = 10.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub components: usize,
    pub cov_reg: f64,
    /// Stop once the mean per-sample log-likelihood improves by less than this.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            components: 1,
            cov_reg: DEFAULT_COV_REG,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GmmParts {
    weights: Vec<f64>,
    means: Array2<f64>,
    covariances: Vec<Array2<f64>>,
    cov_reg: f64,
    fit_log_likelihood_trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GmmParts", into = "GmmParts")]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Array2<f64>,
    covariances: Vec<Array2<f64>>,
    cov_reg: f64,
    trace: Vec<f64>,
    // derived from the fields above
    cholesky: Vec<Array2<f64>>,
    /// ln w_j - L/2 ln 2pi - 1/2 ln |Sigma_j|
    log_consts: Vec<f64>,
}

impl TryFrom<GmmParts> for GaussianMixture {
    type Error = Error;

    fn try_from(p: GmmParts) -> Result<Self> {
        let k = p.weights.len();
        if k == 0 || p.means.nrows() != k || p.covariances.len() != k {
            return Err(Error::Format(format!(
                "mixture has {} weights, {} means, {} covariances",
                k,
                p.means.nrows(),
                p.covariances.len()
            )));
        }
        let l = p.means.ncols();
        if p.covariances.iter().any(|c| c.dim() != (l, l)) {
            return Err(Error::Format("covariance shape does not match mean dimension".into()));
        }
        Self::assemble(p.weights, p.means, p.covariances, p.cov_reg, p.fit_log_likelihood_trace)
    }
}

impl From<GaussianMixture> for GmmParts {
    fn from(m: GaussianMixture) -> Self {
        GmmParts {
            weights: m.weights,
            means: m.means,
            covariances: m.covariances,
            cov_reg: m.cov_reg,
            fit_log_likelihood_trace: m.trace,
        }
    }
}

impl GaussianMixture {
    /// Build a mixture from explicit parameters (covariances are used as given).
    pub fn from_parameters(weights: Vec<f64>, means: Array2<f64>, covariances: Vec<Array2<f64>>) -> Result<Self> {
        Self::try_from(GmmParts {
            weights,
            means,
            covariances,
            cov_reg: 0.0,
            fit_log_likelihood_trace: Vec::new(),
        })
    }

    fn assemble(
        weights: Vec<f64>,
        means: Array2<f64>,
        covariances: Vec<Array2<f64>>,
        cov_reg: f64,
        trace: Vec<f64>,
    ) -> Result<Self> {
        let l = means.ncols();
        let mut cholesky = Vec::with_capacity(weights.len());
        let mut log_consts = Vec::with_capacity(weights.len());
        for (j, cov) in covariances.iter().enumerate() {
            let chol = linalg::cholesky(cov).ok_or_else(|| {
                let min_diag = cov.diag().iter().copied().fold(f64::INFINITY, f64::min);
                Error::Numerical(format!(
                    "covariance of component {j} is not positive definite after regularization \
                     (L = {l}, cov_reg = {cov_reg:e}, min diagonal = {min_diag:e})"
                ))
            })?;
            let half_log_det: f64 = chol.diag().iter().map(|v| v.ln()).sum();
            log_consts.push(weights[j].ln() - 0.5 * l as f64 * LN_2PI - half_log_det);
            cholesky.push(chol);
        }
        Ok(Self {
            weights,
            means,
            covariances,
            cov_reg,
            trace,
            cholesky,
            log_consts,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn covariances(&self) -> &[Array2<f64>] {
        &self.covariances
    }

    pub fn cov_reg(&self) -> f64 {
        self.cov_reg
    }

    /// Mean per-sample log-likelihood after seeding and after each EM step.
    pub fn fit_log_likelihood_trace(&self) -> &[f64] {
        &self.trace
    }

    /// `ln w_j + ln N(v; mu_j, Sigma_j)`.
    pub fn weighted_component_log_density(&self, j: usize, v: &[f64]) -> f64 {
        let mean = self.means.row(j);
        let mut diff: Vec<f64> = v.iter().zip(mean.iter()).map(|(a, b)| a - b).collect();
        let maha = linalg::forward_solve_sq_norm(&self.cholesky[j], &mut diff);
        self.log_consts[j] - 0.5 * maha
    }

    /// `ln sum_j w_j N(v; mu_j, Sigma_j)` via log-sum-exp.
    pub fn score(&self, v: &[f64]) -> Result<DensityScore> {
        Error::check_dim(self.dim(), v.len())?;
        Ok(DensityScore(self.log_density_unchecked(v)))
    }

    fn log_density_unchecked(&self, v: &[f64]) -> f64 {
        if self.components() == 1 {
            return self.weighted_component_log_density(0, v);
        }
        let terms: Vec<f64> = (0..self.components())
            .map(|j| self.weighted_component_log_density(j, v))
            .collect();
        log_sum_exp(&terms)
    }

    /// Mean log-likelihood of `data` under the model.
    pub fn mean_log_likelihood(&self, data: &Array2<f64>, strategy: Strategy) -> Result<f64> {
        Error::check_dim(self.dim(), data.ncols())?;
        let per_row = par::map_range(strategy, data.nrows(), |i| {
            self.log_density_unchecked(data.row(i).as_slice().expect("standard layout"))
        });
        Ok(per_row.iter().sum::<f64>() / data.nrows() as f64)
    }

    /// Learned values per component: weight 1, mean L, covariance L (L + 1) / 2.
    pub fn parameter_count(&self) -> usize {
        let l = self.dim();
        self.components() * (1 + l + l * (l + 1) / 2)
    }

    /// Same count for a diagonal-covariance parameterization: 1 + 2L per component.
    pub fn diagonal_parameter_count(&self) -> usize {
        self.components() * (1 + 2 * self.dim())
    }
}

/// Fit a `k`-component full-covariance mixture.
///
/// `k = 1` is the closed-form maximum-likelihood Gaussian (1/n covariance +
/// `cov_reg` I). Larger `k` runs EM from k-means++ seeding.
pub fn gmm_fit(data: &Array2<f64>, cfg: &GmmConfig) -> Result<GaussianMixture> {
    gmm_fit_with(data, cfg, Strategy::default())
}

pub fn gmm_fit_with(data: &Array2<f64>, cfg: &GmmConfig, strategy: Strategy) -> Result<GaussianMixture> {
    let n = data.nrows();
    let k = cfg.components;
    if k == 0 {
        return Err(Error::arg("mixture needs at least one component"));
    }
    if n < 2 || n < k {
        return Err(Error::arg(format!(
            "mixture with {k} components needs at least max(2, {k}) samples, got {n}"
        )));
    }
    if cfg.cov_reg.is_nan() || cfg.cov_reg <= 0.0 {
        return Err(Error::arg(format!("cov_reg must be positive, got {}", cfg.cov_reg)));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in mixture training data".into()));
    }

    if k == 1 {
        let resp = Array2::ones((n, 1));
        let mut model = m_step(data, &resp, cfg.cov_reg)?;
        let ll = model.mean_log_likelihood(data, strategy)?;
        model.trace = vec![ll];
        return Ok(model);
    }

    let centers = kmeans_plus_plus(data, k, cfg.seed);
    let mut resp = Array2::zeros((n, k));
    for i in 0..n {
        let row = data.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centers.iter().enumerate() {
            let d = sq_dist(row.as_slice().unwrap(), data.row(*c).as_slice().unwrap());
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        resp[[i, best]] = 1.0;
    }

    let mut model = m_step(data, &resp, cfg.cov_reg)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let (ll, new_resp) = e_step(&model, data, strategy);
        let improvement = trace.last().map(|prev| ll - prev);
        trace.push(ll);
        if improvement.is_some_and(|d| d < cfg.tol) || iterations >= cfg.max_iter {
            break;
        }
        let next = m_step(data, &new_resp, cfg.cov_reg)?;
        model = next;
        iterations += 1;
    }
    if iterations >= cfg.max_iter {
        log::debug!("EM stopped at max_iter = {} before reaching tol", cfg.max_iter);
    }
    model.trace = trace;
    Ok(model)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row indices of k-means++ seeds (D^2 sampling).
fn kmeans_plus_plus(data: &Array2<f64>, k: usize, seed: u64) -> Vec<usize> {
    let n = data.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i).as_slice().unwrap(), data.row(centers[0]).as_slice().unwrap()))
        .collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(pick);
        let c = data.row(pick);
        for (i, best) in nearest.iter_mut().enumerate() {
            let d = sq_dist(data.row(i).as_slice().unwrap(), c.as_slice().unwrap());
            if d < *best {
                *best = d;
            }
        }
    }
    centers
}

fn e_step(model: &GaussianMixture, data: &Array2<f64>, strategy: Strategy) -> (f64, Array2<f64>) {
    let n = data.nrows();
    let k = model.components();
    let rows = par::map_range(strategy, n, |i| {
        let v = data.row(i);
        let v = v.as_slice().unwrap();
        let terms: Vec<f64> = (0..k).map(|j| model.weighted_component_log_density(j, v)).collect();
        let lse = log_sum_exp(&terms);
        let r: Vec<f64> = terms.iter().map(|t| (t - lse).exp()).collect();
        (lse, r)
    });
    let mut resp = Array2::zeros((n, k));
    let mut total = 0.0;
    for (i, (lse, r)) in rows.into_iter().enumerate() {
        total += lse;
        resp.row_mut(i).assign(&Array1::from(r));
    }
    (total / n as f64, resp)
}

fn m_step(data: &Array2<f64>, resp: &Array2<f64>, cov_reg: f64) -> Result<GaussianMixture> {
    let n = data.nrows();
    let l = data.ncols();
    let k = resp.ncols();
    let pad = if k > 1 { COUNT_EPS } else { 0.0 };
    let counts: Vec<f64> = resp.sum_axis(Axis(0)).iter().map(|c| c + pad).collect();
    let weights: Vec<f64> = counts.iter().map(|c| c / n as f64).collect();
    let wsum: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / wsum).collect();

    let mut means = resp.t().dot(data);
    for (j, mut row) in means.rows_mut().into_iter().enumerate() {
        row /= counts[j];
    }

    let mut covariances = Vec::with_capacity(k);
    for j in 0..k {
        let mut scaled = data.clone();
        let mu = means.row(j);
        for (i, mut row) in scaled.rows_mut().into_iter().enumerate() {
            let w = resp[[i, j]].sqrt();
            for (x, m) in row.iter_mut().zip(mu.iter()) {
                *x = (*x - m) * w;
            }
        }
        let mut cov = scaled.t().dot(&scaled);
        cov /= counts[j];
        for a in 0..l {
            for b in (a + 1)..l {
                cov[[b, a]] = cov[[a, b]];
            }
            cov[[a, a]] += cov_reg;
        }
        covariances.push(cov);
    }
    GaussianMixture::assemble(weights, means, covariances, cov_reg, Vec::new())
}
