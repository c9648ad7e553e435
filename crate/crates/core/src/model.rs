//! The hierarchical Poisson model with a spatially dependent global-local
//! prior on the spatial coefficients.
//!
//! ```text
//! y_i ~ Poisson(theta_i),   log theta = W alpha + X beta
//! beta_j = tau * lambda_j * beta_tilde_j
//! beta_tilde ~ N(0, (D - rho A)^{-1}),   alpha_k ~ N(0, zeta^2)
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::graph::{car::log_det_unchecked, LatticeGraph};
use crate::priors::{soft_positivity_log, RhoPrior, ScalePrior, DEFAULT_ETA};

/// Linear predictors above this are treated as overflow.
pub const ETA_OVERFLOW: f64 = 700.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Counts with scalar covariates `W` (n x K) and spatial covariates `X` (n x J).
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<u64>,
    w: DMatrix<f64>,
    x: DMatrix<f64>,
    log_factorial_sum: f64,
    standardized: bool,
}

impl Dataset {
    pub fn new(y: Vec<u64>, w: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != y.len() || x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "y has {} rows, W has {}, X has {}",
                y.len(),
                w.nrows(),
                x.nrows()
            )));
        }
        if w.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariates contain non-finite values".into()));
        }
        let log_factorial_sum = y.iter().map(|&v| ln_gamma(v as f64 + 1.0)).sum();
        Ok(Self {
            y,
            w,
            x,
            log_factorial_sum,
            standardized: false,
        })
    }

    /// A dataset with no observations, for sampling the prior.
    pub fn empty(k: usize, j: usize) -> Self {
        Self::new(Vec::new(), DMatrix::zeros(0, k), DMatrix::zeros(0, j)).unwrap()
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    pub fn j(&self) -> usize {
        self.x.ncols()
    }

    pub fn log_factorial_sum(&self) -> f64 {
        self.log_factorial_sum
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Marks the covariates as already standardized.
    pub fn mark_standardized(mut self) -> Self {
        self.standardized = true;
        self
    }

    /// Centers and scales every column of `W` and `X` to mean 0, sd 1.
    /// Constant columns (an intercept, say) are left untouched.
    pub fn standardize(mut self) -> Self {
        standardize_columns(&mut self.w);
        standardize_columns(&mut self.x);
        self.standardized = true;
        self
    }

    /// Rows whose index satisfies `keep`.
    pub fn select_rows(&self, keep: impl Fn(usize) -> bool) -> Self {
        let rows: Vec<usize> = (0..self.n()).filter(|&i| keep(i)).collect();
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let w = self.w.select_rows(rows.iter());
        let x = self.x.select_rows(rows.iter());
        let mut out = Self::new(y, w, x).unwrap();
        out.standardized = self.standardized;
        out
    }

    /// Replaces `X` by `X M` (basis expansion of the spatial field).
    pub fn with_spatial_design(&self, x: DMatrix<f64>) -> Result<Self> {
        let mut out = Self::new(self.y.clone(), self.w.clone(), x)?;
        out.standardized = self.standardized;
        Ok(out)
    }
}

pub(crate) fn standardize_columns(m: &mut DMatrix<f64>) {
    ColumnMoments::fit(m).apply(m);
}

/// Column means and sample standard deviations, for applying one sample's
/// standardization to another (training moments on test rows, say).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMoments {
    pub mean: Vec<f64>,
    /// Zero for constant columns, which are then left untouched.
    pub sd: Vec<f64>,
}

impl ColumnMoments {
    pub fn fit(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        if n < 2 {
            return Self {
                mean: vec![0.0; m.ncols()],
                sd: vec![0.0; m.ncols()],
            };
        }
        let (mean, sd) = m
            .column_iter()
            .map(|col| {
                let mean = col.mean();
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (mean, var.sqrt())
            })
            .unzip();
        Self { mean, sd }
    }

    pub fn apply(&self, m: &mut DMatrix<f64>) {
        for ((mut col, &mean), &sd) in m.column_iter_mut().zip(&self.mean).zip(&self.sd) {
            if sd > 0.0 {
                col.apply(|v| *v = (*v - mean) / sd);
            }
        }
    }
}

/// One point in parameter space. Scales are carried on the log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub alpha: Vec<f64>,
    pub beta_tilde: Vec<f64>,
    pub log_lambda: Vec<f64>,
    pub log_tau: f64,
    pub rho: f64,
}

impl ParamState {
    pub fn zeros(k: usize, j: usize) -> Self {
        Self {
            alpha: vec![0.0; k],
            beta_tilde: vec![0.0; j],
            log_lambda: vec![0.0; j],
            log_tau: 0.0,
            rho: 0.0,
        }
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn lambda(&self) -> Vec<f64> {
        self.log_lambda.iter().map(|v| v.exp()).collect()
    }

    pub fn beta(&self) -> Vec<f64> {
        beta_from(self)
    }
}

/// `beta_j = tau * lambda_j * beta_tilde_j`.
pub fn beta_from(state: &ParamState) -> Vec<f64> {
    state
        .beta_tilde
        .iter()
        .zip(&state.log_lambda)
        .map(|(b, l)| (state.log_tau + l).exp() * b)
        .collect()
}

/// How positivity of `tau` and `lambda` enters the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Positivity {
    /// Random walk on `log tau`, `log lambda` with exact Jacobians.
    #[default]
    Log,
    /// Random walk on the raw scale; the prior is multiplied by
    /// `sigmoid(eta * x)` in place of the hard indicator.
    Sigmoid,
}

/// Named rows of the model comparison matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelName {
    #[serde(rename = "DLC")]
    Dlc,
    #[serde(rename = "DHS")]
    Dhs,
    #[serde(rename = "HS")]
    Hs,
    #[serde(rename = "LC")]
    Lc,
    #[serde(rename = "CAR")]
    Car,
}

impl ModelName {
    pub const ALL: [ModelName; 5] = [
        ModelName::Dlc,
        ModelName::Dhs,
        ModelName::Hs,
        ModelName::Lc,
        ModelName::Car,
    ];

    /// `(tau prior, lambda prior, rho prior)`.
    pub fn priors(self) -> (ScalePrior, ScalePrior, RhoPrior) {
        use RhoPrior::*;
        use ScalePrior::*;
        match self {
            ModelName::Dlc => (LogCauchy, LogCauchy, Uniform01),
            ModelName::Dhs => (HalfCauchy, HalfCauchy, Uniform01),
            ModelName::Hs => (HalfCauchy, HalfCauchy, FixedZero),
            ModelName::Lc => (LogCauchy, LogCauchy, FixedZero),
            ModelName::Car => (HalfCauchy, FixedOne, Uniform01),
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelName::Dlc => "DLC",
            ModelName::Dhs => "DHS",
            ModelName::Hs => "HS",
            ModelName::Lc => "LC",
            ModelName::Car => "CAR",
        })
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub tau_prior: ScalePrior,
    pub lambda_prior: ScalePrior,
    pub rho_prior: RhoPrior,
    /// Prior standard deviation of each `alpha_k`.
    pub zeta: f64,
    /// Sharpness of the soft positivity indicator.
    pub eta: f64,
    pub positivity: Positivity,
    pub graph: Arc<LatticeGraph>,
}

impl ModelSpec {
    pub fn new(
        tau_prior: ScalePrior,
        lambda_prior: ScalePrior,
        rho_prior: RhoPrior,
        graph: Arc<LatticeGraph>,
    ) -> Self {
        let dim = graph.len();
        Self {
            tau_prior: tau_prior.with_dim(dim),
            lambda_prior: lambda_prior.with_dim(dim),
            rho_prior,
            zeta: 1.0,
            eta: DEFAULT_ETA,
            positivity: Positivity::Log,
            graph,
        }
    }

    pub fn named(name: ModelName, graph: Arc<LatticeGraph>) -> Self {
        let (t, l, r) = name.priors();
        Self::new(t, l, r, graph)
    }

    pub fn with_zeta(mut self, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0) {
            return Err(Error::NonPositive { name: "zeta", value: zeta });
        }
        self.zeta = zeta;
        Ok(self)
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::NonPositive { name: "eta", value: eta });
        }
        self.eta = eta;
        Ok(self)
    }

    pub fn with_positivity(mut self, positivity: Positivity) -> Self {
        self.positivity = positivity;
        self
    }

    pub fn dim(&self) -> usize {
        self.graph.len()
    }

    /// Prior log density of one scale parameter stored as `u = log x`.
    pub fn scale_log_prior(&self, prior: &ScalePrior, u: f64) -> f64 {
        match self.positivity {
            Positivity::Log => prior.log_density_log_scale(u),
            Positivity::Sigmoid => {
                if prior.is_fixed() {
                    return prior.log_density_log_scale(u);
                }
                let x = u.exp();
                prior.log_density(x) + soft_positivity_log(x, self.eta)
            }
        }
    }

    /// CAR log density of `beta_tilde` at dependence `rho`.
    pub fn car_log_density(&self, beta_tilde: &[f64], rho: f64) -> f64 {
        if !(0.0..1.0).contains(&rho) {
            return f64::NEG_INFINITY;
        }
        let g = &self.graph;
        let quad = g.degree_quad(beta_tilde) - rho * g.adjacency_quad(beta_tilde);
        -0.5 * g.len() as f64 * LN_2PI + 0.5 * log_det_unchecked(g, rho) - 0.5 * quad
    }

    pub fn alpha_log_prior(&self, alpha: &[f64]) -> f64 {
        let z2 = self.zeta * self.zeta;
        alpha
            .iter()
            .map(|a| -0.5 * (LN_2PI + z2.ln()) - a * a / (2.0 * z2))
            .sum()
    }

    pub fn check_state(&self, state: &ParamState) -> Result<()> {
        let j = self.dim();
        if state.beta_tilde.len() != j || state.log_lambda.len() != j {
            return Err(Error::Dimension(format!(
                "state has {} / {} spatial entries, graph has {j} nodes",
                state.beta_tilde.len(),
                state.log_lambda.len()
            )));
        }
        Ok(())
    }
}

/// Poisson log likelihood for a linear predictor, `-inf` on overflow.
pub fn poisson_log_likelihood(y: &[u64], eta: &[f64], log_factorial_sum: f64) -> f64 {
    let mut total = -log_factorial_sum;
    for (&yi, &e) in y.iter().zip(eta) {
        if e > ETA_OVERFLOW || e.is_nan() {
            return f64::NEG_INFINITY;
        }
        total += yi as f64 * e - e.exp();
    }
    total
}

/// `W alpha + X beta`.
pub fn linear_predictor(data: &Dataset, alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    let a = DVector::from_column_slice(alpha);
    let b = DVector::from_column_slice(beta);
    let eta = data.w() * a + data.x() * b;
    eta.iter().copied().collect()
}

pub fn log_likelihood(state: &ParamState, data: &Dataset) -> Result<f64> {
    if state.alpha.len() != data.k() || state.beta_tilde.len() != data.j() {
        return Err(Error::Dimension(format!(
            "state has K={} J={}, data has K={} J={}",
            state.alpha.len(),
            state.beta_tilde.len(),
            data.k(),
            data.j()
        )));
    }
    if data.n() == 0 {
        return Ok(0.0);
    }
    let eta = linear_predictor(data, &state.alpha, &beta_from(state));
    Ok(poisson_log_likelihood(data.y(), &eta, data.log_factorial_sum()))
}

pub fn log_prior(state: &ParamState, spec: &ModelSpec) -> Result<f64> {
    spec.check_state(state)?;
    let rho_term = spec.rho_prior.log_density(state.rho);
    if rho_term == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let lambda_term: f64 = state
        .log_lambda
        .iter()
        .map(|&u| spec.scale_log_prior(&spec.lambda_prior, u))
        .sum();
    let total = spec.alpha_log_prior(&state.alpha)
        + spec.car_log_density(&state.beta_tilde, state.rho)
        + lambda_term
        + spec.scale_log_prior(&spec.tau_prior, state.log_tau)
        + rho_term;
    Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
}

pub fn log_posterior(state: &ParamState, spec: &ModelSpec, data: &Dataset) -> Result<f64> {
    let prior = log_prior(state, spec)?;
    if prior == f64::NEG_INFINITY {
        return Ok(prior);
    }
    let total = prior + log_likelihood(state, data)?;
    Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
}

#[cfg(test)]
pub(crate) fn normal_log_density(x: f64, sd: f64) -> f64 {
    -0.5 * LN_2PI - sd.ln() - x * x / (2.0 * sd * sd)
}
