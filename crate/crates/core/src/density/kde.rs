use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{log_sum_exp, DensityScore};
use crate::error::{Error, Result};

pub const DEFAULT_BANDWIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KdeKernel {
    /// `(2 pi h^2)^{-L/2} exp(-|u|^2 / 2h^2)`
    Gaussian,
    /// `c(h, L) exp(-|u| / h)` with `c` the exact normalizer
    /// `Gamma(L/2) / (2 pi^{L/2} Gamma(L) h^L)`.
    Exponential,
}

impl fmt::Display for KdeKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KdeKernel::Gaussian => "gaussian",
            KdeKernel::Exponential => "exponential",
        })
    }
}

impl FromStr for KdeKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KdeKernel::Gaussian),
            "exponential" => Ok(KdeKernel::Exponential),
            other => Err(Error::arg(format!("unknown KDE kernel {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    kernel: KdeKernel,
    bandwidth: f64,
    support: Array2<f64>,
}

pub fn kde_fit(data: &Array2<f64>, kernel: KdeKernel, bandwidth: f64) -> Result<KdeModel> {
    if data.nrows() == 0 {
        return Err(Error::arg("kernel density estimate needs at least one point"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::arg(format!("bandwidth must be positive, got {bandwidth}")));
    }
    Ok(KdeModel {
        kernel,
        bandwidth,
        support: data.as_standard_layout().into_owned(),
    })
}

impl KdeModel {
    pub fn kernel(&self) -> KdeKernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    pub fn support_len(&self) -> usize {
        self.support.nrows()
    }

    /// Log of the kernel normalizing constant.
    pub fn log_normalizer(&self) -> f64 {
        let l = self.dim() as f64;
        let h = self.bandwidth;
        match self.kernel {
            KdeKernel::Gaussian => -0.5 * l * (2.0 * std::f64::consts::PI * h * h).ln(),
            KdeKernel::Exponential => {
                -(std::f64::consts::LN_2 + 0.5 * l * std::f64::consts::PI.ln() - ln_gamma(0.5 * l)
                    + ln_gamma(l)
                    + l * h.ln())
            }
        }
    }

    /// `ln[(1/n) sum_i K_h(v - x_i)]`.
    pub fn score(&self, v: &[f64]) -> Result<DensityScore> {
        Error::check_dim(self.dim(), v.len())?;
        let h = self.bandwidth;
        let exponents: Vec<f64> = self
            .support
            .rows()
            .into_iter()
            .map(|x| {
                let sq: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                match self.kernel {
                    KdeKernel::Gaussian => -sq / (2.0 * h * h),
                    KdeKernel::Exponential => -sq.sqrt() / h,
                }
            })
            .collect();
        let n = self.support_len() as f64;
        Ok(DensityScore(log_sum_exp(&exponents) - n.ln() + self.log_normalizer()))
    }
}
