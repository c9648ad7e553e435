//! Reference forecasters: moving average, Poisson GLM by IRLS, location-wise
//! Wald screening and fixed-region averaging.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::ETA_OVERFLOW;

const IRLS_MAX_ITER: usize = 50;
const IRLS_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 30;

/// Mean of the last `window` values.
pub fn moving_average_forecast(history: &[f64], window: usize) -> Result<f64> {
    if window == 0 || history.len() < window {
        return Err(Error::InvalidArgument(format!(
            "moving average over {window} values needs at least that much history, got {}",
            history.len()
        )));
    }
    Ok(history[history.len() - window..].iter().sum::<f64>() / window as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Deviance after each accepted step, starting from the initial point.
    pub deviance_trace: Vec<f64>,
}

impl GlmFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.linear_predictor(row).exp()
    }

    pub fn z_stat(&self, index: usize) -> f64 {
        self.coefficients[index] / self.standard_errors[index]
    }
}

fn poisson_deviance(y: &[f64], eta: &DVector<f64>) -> f64 {
    if eta.iter().any(|&e| !(e <= ETA_OVERFLOW)) {
        return f64::INFINITY;
    }
    2.0 * y
        .iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| {
            let mu = e.exp();
            let term = if yi > 0.0 { yi * (yi.ln() - e) } else { 0.0 };
            term - (yi - mu)
        })
        .sum::<f64>()
}

fn information(design: &DMatrix<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let weighted = DMatrix::from_fn(design.nrows(), design.ncols(), |i, j| design[(i, j)] * mu[i]);
    design.transpose() * weighted
}

/// Poisson regression by iteratively reweighted least squares with step
/// halving. Stops when no coefficient moves by more than 1e-8 or after 50
/// iterations.
pub fn fit_poisson_glm_irls(y: &[f64], design: &DMatrix<f64>) -> Result<GlmFit> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!("y has {} rows, design has {n}", y.len())));
    }
    if y.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("counts must be finite and non-negative".into()));
    }
    if n <= p || design.clone().svd(false, false).rank(1e-10 * n as f64) < p {
        return Err(Error::RankDeficient);
    }
    let mut beta = DVector::zeros(p);
    let mut eta = design * &beta;
    let mut dev = poisson_deviance(y, &eta);
    let mut trace = vec![dev];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < IRLS_MAX_ITER {
        iterations += 1;
        let mu = eta.map(f64::exp);
        let z = DVector::from_fn(n, |i, _| eta[i] + (y[i] - mu[i]) / mu[i]);
        let info = information(design, &mu);
        let rhs = design.transpose() * DVector::from_fn(n, |i, _| mu[i] * z[i]);
        let Some(chol) = info.cholesky() else {
            break;
        };
        let target = chol.solve(&rhs);
        let mut step = &target - &beta;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = &beta + &step;
            let cand_eta = design * &cand;
            let cand_dev = poisson_deviance(y, &cand_eta);
            if cand_dev <= dev * (1.0 + 1e-12) + 1e-12 {
                accepted = Some((cand, cand_eta, cand_dev));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_eta, cand_dev)) = accepted else {
            break;
        };
        let change = (&cand - &beta).amax();
        beta = cand;
        eta = cand_eta;
        dev = cand_dev.min(dev);
        trace.push(cand_dev);
        if change < IRLS_TOL {
            converged = true;
            break;
        }
    }
    let mu = eta.map(f64::exp);
    let standard_errors = match information(design, &mu).try_inverse() {
        Some(inv) => (0..p).map(|i| inv[(i, i)].max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; p],
    };
    let converged = converged && beta.iter().all(|b| b.is_finite());
    Ok(GlmFit {
        coefficients: beta.iter().copied().collect(),
        standard_errors,
        converged,
        iterations,
        deviance_trace: trace,
    })
}

/// `[W | extra]` column-bound.
fn with_column(w: &DMatrix<f64>, extra: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let k = w.ncols();
    DMatrix::from_fn(w.nrows(), k + 1, |i, c| if c < k { w[(i, c)] } else { extra(i) })
}

/// Row means of `X` over the masked columns.
pub fn masked_row_mean(x: &DMatrix<f64>, mask: &[bool]) -> Result<Vec<f64>> {
    if mask.len() != x.ncols() {
        return Err(Error::Dimension(format!(
            "mask has {} regions, X has {} columns",
            mask.len(),
            x.ncols()
        )));
    }
    let cols: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    if cols.is_empty() {
        return Err(Error::InvalidArgument("region mask is empty".into()));
    }
    Ok((0..x.nrows())
        .map(|i| cols.iter().map(|&j| x[(i, j)]).sum::<f64>() / cols.len() as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub active: Vec<bool>,
    pub z: Vec<f64>,
    /// Row means of `X` over the active regions (all regions on fallback).
    pub pooled: Vec<f64>,
    /// Set when no region was significant.
    pub fallback: bool,
}

impl ScreenResult {
    /// Regions the pooled predictor averages over.
    pub fn pooled_mask(&self) -> Vec<bool> {
        if self.fallback {
            vec![true; self.active.len()]
        } else {
            self.active.clone()
        }
    }
}

/// Per-region Poisson regressions of `y` on `[W, X_j]`; region `j` is
/// active when the two-sided Wald test on `X_j` rejects at `alpha_level`.
pub fn tstat_screen(y: &[f64], w: &DMatrix<f64>, x: &DMatrix<f64>, alpha_level: f64) -> Result<ScreenResult> {
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {alpha_level} outside (0, 1)")));
    }
    let normal = Normal::standard();
    let k = w.ncols();
    let z: Vec<f64> = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let fit = fit_poisson_glm_irls(y, &with_column(w, |i| x[(i, j)]))?;
            Ok(if fit.converged { fit.z_stat(k) } else { f64::NAN })
        })
        .collect::<Result<_>>()?;
    let active: Vec<bool> = z
        .iter()
        .map(|&zj| zj.is_finite() && 2.0 * (1.0 - normal.cdf(zj.abs())) < alpha_level)
        .collect();
    let fallback = !active.iter().any(|&a| a);
    let mask = if fallback { vec![true; active.len()] } else { active.clone() };
    Ok(ScreenResult {
        pooled: masked_row_mean(x, &mask)?,
        active,
        z,
        fallback,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionForecast {
    pub fit: GlmFit,
    pub predictions: Vec<f64>,
}

/// Regresses `y` on `[W, mean of X over mask]` and predicts the new rows.
pub fn fixed_region_forecast(
    y: &[f64],
    w: &DMatrix<f64>,
    x: &DMatrix<f64>,
    mask: &[bool],
    w_new: &DMatrix<f64>,
    x_new: &DMatrix<f64>,
) -> Result<RegionForecast> {
    let scalar = masked_row_mean(x, mask)?;
    let fit = fit_poisson_glm_irls(y, &with_column(w, |i| scalar[i]))?;
    let scalar_new = masked_row_mean(x_new, mask)?;
    let predictions = (0..w_new.nrows())
        .map(|i| {
            let mut row: Vec<f64> = w_new.row(i).iter().copied().collect();
            row.push(scalar_new[i]);
            fit.predict(&row)
        })
        .collect();
    Ok(RegionForecast { fit, predictions })
}
