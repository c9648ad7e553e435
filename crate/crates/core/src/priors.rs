//! Scale and dependence priors, all evaluated on the log scale.
//!
//! Every scale prior exposes two entry points: the density of the raw
//! positive parameter `x`, and the density of `u = log x` (raw density plus
//! the Jacobian `u`). The sampler works with the second form, which stays
//! finite for `|u|` far beyond the range where `exp(u)` is representable.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2_OVER_PI: f64 = -0.451_582_705_289_454_9;

/// Sharpness used by the soft positivity indicator.
pub const DEFAULT_ETA: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScalePrior {
    /// Density `(1/x) / (pi^2 + log^2 x)` on `x > 0`.
    LogCauchy,
    /// Density `2 / (pi (1 + x^2))` on `x > 0`.
    HalfCauchy,
    /// `1 / (1 + x^2)` restricted to `[1/dim, 1]`.
    TruncatedCauchy { dim: usize },
    /// Point mass at 1.
    FixedOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RhoPrior {
    Uniform01,
    FixedZero,
}

fn positive(x: f64) -> Result<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositive { name: "x", value: x })
    }
}

/// `log(1 + exp(t))` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn log_density_log_cauchy(x: f64) -> Result<f64> {
    positive(x)?;
    let l = x.ln();
    Ok(-l - (PI * PI + l * l).ln())
}

pub fn log_density_half_cauchy(x: f64) -> Result<f64> {
    positive(x)?;
    Ok(LN_2_OVER_PI - (x * x).ln_1p())
}

fn truncated_log_normalizer(dim: usize) -> f64 {
    (FRAC_PI_4 - (1.0 / dim as f64).atan()).ln()
}

/// Truncated Cauchy on `[1/dim, 1]`; `-inf` outside the support.
pub fn log_density_truncated_cauchy(x: f64, dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "truncated Cauchy needs dim >= 2, got {dim}"
        )));
    }
    if !(x >= 1.0 / dim as f64 && x <= 1.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(-(x * x).ln_1p() - truncated_log_normalizer(dim))
}

/// `log sigmoid(eta * x)`.
pub fn soft_positivity_log(x: f64, eta: f64) -> f64 {
    -softplus(-eta * x)
}

impl ScalePrior {
    /// Log density of the raw parameter; `-inf` off the support.
    pub fn log_density(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            ScalePrior::LogCauchy => log_density_log_cauchy(x).unwrap(),
            ScalePrior::HalfCauchy => log_density_half_cauchy(x).unwrap(),
            ScalePrior::TruncatedCauchy { dim } => {
                log_density_truncated_cauchy(x, dim).unwrap_or(f64::NEG_INFINITY)
            }
            ScalePrior::FixedOne => {
                if x == 1.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Log density of `u = log x`, Jacobian included.
    pub fn log_density_log_scale(&self, u: f64) -> f64 {
        if u.is_nan() {
            return f64::NEG_INFINITY;
        }
        match *self {
            // exactly the Cauchy(0, pi) density in u
            ScalePrior::LogCauchy => -(PI * PI + u * u).ln(),
            ScalePrior::HalfCauchy => LN_2_OVER_PI - softplus(2.0 * u) + u,
            ScalePrior::TruncatedCauchy { dim } => {
                if u < -(dim as f64).ln() || u > 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -softplus(2.0 * u) - truncated_log_normalizer(dim) + u
                }
            }
            ScalePrior::FixedOne => {
                if u == 0.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, ScalePrior::FixedOne)
    }

    /// Replaces the placeholder dimension of a parsed `TC` prior.
    pub fn with_dim(self, dim: usize) -> Self {
        match self {
            ScalePrior::TruncatedCauchy { .. } => ScalePrior::TruncatedCauchy { dim },
            other => other,
        }
    }
}

impl RhoPrior {
    pub fn log_density(&self, rho: f64) -> f64 {
        match self {
            RhoPrior::Uniform01 if (0.0..1.0).contains(&rho) => 0.0,
            RhoPrior::FixedZero if rho == 0.0 => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, RhoPrior::FixedZero)
    }
}

impl FromStr for ScalePrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LC" => Ok(ScalePrior::LogCauchy),
            "HS" => Ok(ScalePrior::HalfCauchy),
            "TC" => Ok(ScalePrior::TruncatedCauchy { dim: 2 }),
            "fixed1" => Ok(ScalePrior::FixedOne),
            other => Err(Error::Config(format!(
                "unknown scale prior {other:?} (expected LC, HS, TC or fixed1)"
            ))),
        }
    }
}

impl fmt::Display for ScalePrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalePrior::LogCauchy => "LC",
            ScalePrior::HalfCauchy => "HS",
            ScalePrior::TruncatedCauchy { .. } => "TC",
            ScalePrior::FixedOne => "fixed1",
        })
    }
}

impl FromStr for RhoPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unif01" => Ok(RhoPrior::Uniform01),
            "zero" => Ok(RhoPrior::FixedZero),
            other => Err(Error::Config(format!(
                "unknown rho prior {other:?} (expected unif01 or zero)"
            ))),
        }
    }
}

impl fmt::Display for RhoPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RhoPrior::Uniform01 => "unif01",
            RhoPrior::FixedZero => "zero",
        })
    }
}

macro_rules! string_conversions {
    ($t:ty) => {
        impl TryFrom<String> for $t {
            type Error = Error;
            fn try_from(s: String) -> Result<Self> {
                s.parse()
            }
        }
        impl From<$t> for String {
            fn from(p: $t) -> String {
                p.to_string()
            }
        }
    };
}

string_conversions!(ScalePrior);
string_conversions!(RhoPrior);
