use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::envelope::EnvelopeCholesky;
use super::LatticeGraph;
use crate::error::{Error, Result};

/// A proper CAR field with precision `D - rho A` over a graph.
#[derive(Debug, Clone, Copy)]
pub struct CarField<'g> {
    graph: &'g LatticeGraph,
    rho: f64,
}

impl<'g> CarField<'g> {
    pub fn new(graph: &'g LatticeGraph, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::RhoOutOfRange(rho));
        }
        Ok(Self { graph, rho })
    }

    pub fn graph(&self) -> &'g LatticeGraph {
        self.graph
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn precision(&self) -> SparsePrecision {
        car_precision(self)
    }

    pub fn log_det(&self) -> f64 {
        log_det_unchecked(self.graph, self.rho)
    }

    /// `x' (D - rho A) x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.graph.degree_quad(x) - self.rho * self.graph.adjacency_quad(x)
    }

    pub fn sampler(&self) -> Result<CarSampler> {
        let q = self.precision();
        Ok(CarSampler {
            factor: EnvelopeCholesky::factor(&q.diag, &q.off)?,
        })
    }
}

/// Sparse symmetric matrix: diagonal plus per-row off-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePrecision {
    pub diag: Vec<f64>,
    pub off: Vec<Vec<(usize, f64)>>,
}

impl SparsePrecision {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag));
        for (i, row) in self.off.iter().enumerate() {
            for &(k, v) in row {
                m[(i, k)] = v;
            }
        }
        debug_assert_eq!(m.nrows(), n);
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.diag
            .iter()
            .zip(&self.off)
            .enumerate()
            .map(|(i, (d, row))| d * x[i] + row.iter().map(|&(k, v)| v * x[k]).sum::<f64>())
            .collect()
    }
}

/// Cached Cholesky factor of a CAR precision for repeated exact draws.
#[derive(Debug, Clone)]
pub struct CarSampler {
    factor: EnvelopeCholesky,
}

impl CarSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.factor.sample(rng)
    }

    pub fn factor(&self) -> &EnvelopeCholesky {
        &self.factor
    }
}

pub fn car_precision(field: &CarField<'_>) -> SparsePrecision {
    let g = field.graph;
    SparsePrecision {
        diag: (0..g.len()).map(|j| g.degree(j) as f64).collect(),
        off: (0..g.len())
            .map(|j| g.neighbors(j).iter().map(|&k| (k, -field.rho)).collect())
            .collect(),
    }
}

/// `log |D - rho A|` from the cached normalized spectrum.
pub fn car_log_det(graph: &LatticeGraph, rho: f64) -> Result<f64> {
    CarField::new(graph, rho).map(|f| f.log_det())
}

pub(crate) fn log_det_unchecked(graph: &LatticeGraph, rho: f64) -> f64 {
    let degrees: f64 = (0..graph.len()).map(|j| (graph.degree(j) as f64).ln()).sum();
    if rho == 0.0 {
        return degrees;
    }
    degrees
        + graph
            .normalized_spectrum()
            .iter()
            .map(|mu| (1.0 - rho * mu).ln())
            .sum::<f64>()
}

/// One exact draw from `N(0, (D - rho A)^{-1})`.
pub fn sample_car<R: Rng + ?Sized>(field: &CarField<'_>, rng: &mut R) -> Result<Vec<f64>> {
    Ok(field.sampler()?.sample(rng))
}

/// `tau^2 Lambda (D - rho A)^{-1} Lambda`, by dense solve.
pub fn induced_covariance(field: &CarField<'_>, tau: f64, lambda: &[f64]) -> Result<DMatrix<f64>> {
    let n = field.graph.len();
    if lambda.len() != n {
        return Err(Error::Dimension(format!(
            "lambda has length {}, graph has {n} nodes",
            lambda.len()
        )));
    }
    if !(tau >= 0.0) {
        return Err(Error::NonPositive { name: "tau", value: tau });
    }
    if let Some(&bad) = lambda.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::NonPositive { name: "lambda", value: bad });
    }
    let q = field.precision().to_dense();
    let inv = q
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(0))?
        .inverse();
    Ok(DMatrix::from_fn(n, n, |j, k| {
        tau * tau * lambda[j] * lambda[k] * inv[(j, k)]
    }))
}

/// Truncated path-count series for `Cov(beta_j, beta_k)`, summing path
/// lengths `1..=max_len`, each weighted by `rho^l / sqrt(D_jj^l D_kk^l)`.
#[allow(clippy::too_many_arguments)]
pub fn path_series_covariance(
    field: &CarField<'_>,
    tau: f64,
    lam_j: f64,
    lam_k: f64,
    j: usize,
    k: usize,
    max_len: usize,
) -> Result<f64> {
    let g = field.graph;
    if j == k || j >= g.len() || k >= g.len() {
        return Err(Error::InvalidArgument(format!(
            "path series needs two distinct nodes, got ({j}, {k})"
        )));
    }
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let dj = g.degree(j) as f64;
    let dk = g.degree(k) as f64;
    // walks[v] = (A^l)_{v,k}
    let mut walks = vec![0.0; g.len()];
    walks[k] = 1.0;
    let mut series = 0.0;
    for l in 1..=max_len {
        let next: Vec<f64> = (0..g.len())
            .map(|v| g.neighbors(v).iter().map(|&u| walks[u]).sum())
            .collect();
        walks = next;
        let scale = (dj * dk).powi(l as i32).sqrt();
        series += walks[j] / scale * field.rho.powi(l as i32);
    }
    Ok(tau * tau * lam_j * lam_k / (dj * dk).sqrt() * series)
}
