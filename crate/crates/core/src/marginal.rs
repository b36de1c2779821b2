//! Univariate continuous marginals with explicit quantile functions.

use crate::error::{Error, Result};
use crate::special::{normal_cdf, normal_pdf, normal_quantile};
use serde::{Deserialize, Serialize};

fn zero() -> f64 {
    0.0
}
fn one() -> f64 {
    1.0
}

/// A univariate distribution given by its CDF, density and generalized
/// (left-continuous) inverse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Marginal {
    Uniform {
        #[serde(default = "zero")]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    Normal {
        #[serde(default = "zero")]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    Exponential {
        #[serde(default = "one")]
        rate: f64,
    },
}

impl Default for Marginal {
    fn default() -> Self {
        Marginal::Uniform { lo: 0.0, hi: 1.0 }
    }
}

impl Marginal {
    pub fn standard_uniform() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Marginal::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Marginal::Exponential { rate } => rate.is_finite() && rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid marginal parameters: {self:?}")))
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Marginal::Normal { mean, sd } => normal_cdf((x - mean) / sd),
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Marginal::Normal { mean, sd } => normal_pdf((x - mean) / sd) / sd,
            Marginal::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
        }
    }

    /// `inf{x : F(x) >= u}` for `u ∈ [0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Marginal::Uniform { lo, hi } => lo + u.clamp(0.0, 1.0) * (hi - lo),
            Marginal::Normal { mean, sd } => mean + sd * normal_quantile(u),
            Marginal::Exponential { rate } => {
                if u <= 0.0 {
                    0.0
                } else {
                    -(-u).ln_1p() / rate
                }
            }
        }
    }
}
