//! Posterior summaries, region selection and predictive simulation.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ETA_OVERFLOW;
use crate::sampler::{pooled_alpha, pooled_beta, ChainOutput};

/// Shortest interval covering `ceil(level * S)` of the sorted samples.
pub fn hpd_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("HPD level {level} outside (0, 1)")));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("HPD input contains NaN".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    hpd_sorted(&sorted, level)
}

fn hpd_sorted(sorted: &[f64], level: f64) -> Result<(f64, f64)> {
    let s = sorted.len();
    let window = (level * s as f64).ceil() as usize;
    if s == 0 || window == 0 || window > s {
        return Err(Error::InvalidArgument(format!(
            "{s} samples cannot support a {level} HPD window"
        )));
    }
    let best = (0..=s - window)
        .min_by(|&a, &b| {
            let wa = sorted[a + window - 1] - sorted[a];
            let wb = sorted[b + window - 1] - sorted[b];
            wa.total_cmp(&wb)
        })
        .expect("non-empty range");
    Ok((sorted[best], sorted[best + window - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub level: f64,
    pub params: Vec<ParamSummary>,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

impl PosteriorSummary {
    /// Summarizes every column of an `S x P` draw matrix.
    pub fn from_draws(draws: &DMatrix<f64>, level: f64) -> Result<Self> {
        let params = (0..draws.ncols())
            .into_par_iter()
            .map(|j| {
                let col: Vec<f64> = draws.column(j).iter().copied().collect();
                let (mean, sd) = mean_sd(&col);
                let (hpd_lower, hpd_upper) = hpd_interval(&col, level)?;
                Ok(ParamSummary {
                    mean,
                    sd,
                    hpd_lower,
                    hpd_upper,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { level, params })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRule {
    #[serde(rename = "HPD")]
    Hpd,
    #[serde(rename = "SN")]
    Sn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub active: Vec<bool>,
    pub rule: SelectionRule,
    pub level: f64,
    /// Regions decided by convention: zero posterior sd, or a probability
    /// exactly at the 0.5 threshold under the SN rule.
    pub flagged: Vec<usize>,
}

impl SelectionResult {
    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Region `j` is active when the HPD interval of its coefficient excludes zero.
pub fn select_regions_hpd(beta_draws: &DMatrix<f64>, level: f64) -> Result<SelectionResult> {
    let summary = PosteriorSummary::from_draws(beta_draws, level)?;
    let active = summary
        .params
        .iter()
        .map(|p| p.hpd_lower > 0.0 || p.hpd_upper < 0.0)
        .collect();
    Ok(SelectionResult {
        active,
        rule: SelectionRule::Hpd,
        level,
        flagged: Vec::new(),
    })
}

/// Scaled-neighbourhood rule: region `j` is active when the posterior mass
/// of `|beta_j| < sd_j` is at most one half.
pub fn select_regions_sn(beta_draws: &DMatrix<f64>) -> SelectionResult {
    let s = beta_draws.nrows() as f64;
    let mut flagged = Vec::new();
    let active = (0..beta_draws.ncols())
        .map(|j| {
            let col: Vec<f64> = beta_draws.column(j).iter().copied().collect();
            let (_, sd) = mean_sd(&col);
            if !(sd > 0.0) {
                flagged.push(j);
                return false;
            }
            let inside = col.iter().filter(|b| b.abs() < sd).count() as f64 / s;
            if inside == 0.5 {
                flagged.push(j);
            }
            inside <= 0.5
        })
        .collect();
    SelectionResult {
        active,
        rule: SelectionRule::Sn,
        level: 0.5,
        flagged,
    }
}

/// Regions active in at least two consecutive masks.
pub fn persistently_active(masks: &[Vec<bool>]) -> Result<Vec<bool>> {
    if masks.len() < 2 {
        return Err(Error::InvalidArgument("need at least two masks".into()));
    }
    let j = masks[0].len();
    if masks.iter().any(|m| m.len() != j) {
        return Err(Error::Dimension("masks differ in length".into()));
    }
    Ok((0..j)
        .map(|r| masks.windows(2).any(|w| w[0][r] && w[1][r]))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Posterior predictive mean.
    pub mean: f64,
    pub rounded: u64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
    /// Mean of the Poisson rate over draws.
    pub rate_mean: f64,
    #[serde(skip)]
    pub draws: Vec<f64>,
}

/// Posterior predictive distribution for one new observation, using every
/// retained draw of every chain once.
pub fn posterior_predictive<R: Rng + ?Sized>(
    chains: &[ChainOutput],
    w_new: &[f64],
    x_new: &[f64],
    level: f64,
    rng: &mut R,
) -> Result<Prediction> {
    let alpha = pooled_alpha(chains);
    let beta = pooled_beta(chains);
    predictive_from_draws(&alpha, &beta, w_new, x_new, level, rng)
}

/// As [`posterior_predictive`] with draw matrices given directly.
pub fn predictive_from_draws<R: Rng + ?Sized>(
    alpha: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    w_new: &[f64],
    x_new: &[f64],
    level: f64,
    rng: &mut R,
) -> Result<Prediction> {
    if alpha.ncols() != w_new.len() || beta.ncols() != x_new.len() || alpha.nrows() != beta.nrows() {
        return Err(Error::Dimension(format!(
            "draws are {}x{} / {}x{}, new row has {} + {} entries",
            alpha.nrows(),
            alpha.ncols(),
            beta.nrows(),
            beta.ncols(),
            w_new.len(),
            x_new.len()
        )));
    }
    if alpha.nrows() == 0 {
        return Err(Error::InvalidArgument("no posterior draws".into()));
    }
    let mut draws = Vec::with_capacity(alpha.nrows());
    let mut rate_sum = 0.0;
    for s in 0..alpha.nrows() {
        let eta: f64 = alpha.row(s).iter().zip(w_new).map(|(a, w)| a * w).sum::<f64>()
            + beta.row(s).iter().zip(x_new).map(|(b, x)| b * x).sum::<f64>();
        if !(eta <= ETA_OVERFLOW) {
            return Err(Error::Overflow { row: s, eta });
        }
        let theta = eta.exp();
        rate_sum += theta;
        let y = if theta > 0.0 {
            Poisson::new(theta)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .sample(rng)
        } else {
            0.0
        };
        draws.push(y);
    }
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let (hpd_lower, hpd_upper) = hpd_interval(&draws, level)?;
    Ok(Prediction {
        mean,
        rounded: mean.round() as u64,
        hpd_lower,
        hpd_upper,
        rate_mean: rate_sum / n,
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Exp, StandardNormal};

    fn normal_draws(n: usize, mu: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| mu + rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    #[test]
    fn hpd_standard_normal() {
        let (lo, hi) = hpd_interval(&normal_draws(1_000_000, 0.0, 1), 0.95).unwrap();
        assert!((lo + 1.96).abs() < 0.02 && (hi - 1.96).abs() < 0.02, "{lo} {hi}");
    }

    #[test]
    fn hpd_exponential_starts_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d: Vec<f64> = (0..200_000).map(|_| Exp::new(1.0).unwrap().sample(&mut rng)).collect();
        let (lo, hi) = hpd_interval(&d, 0.95).unwrap();
        assert!(lo < 0.01);
        assert!((hi - 2.9957).abs() < 0.05, "{hi}");
    }

    #[test]
    fn hpd_constant_and_errors() {
        assert_eq!(hpd_interval(&[3.5; 200], 0.95).unwrap(), (3.5, 3.5));
        assert!(hpd_interval(&[], 0.95).is_err());
        assert!(hpd_interval(&[1.0, f64::NAN], 0.5).is_err());
        assert!(hpd_interval(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn hpd_selection_trivial() {
        let mut m = DMatrix::zeros(1000, 2);
        let sym = normal_draws(1000, 0.0, 3);
        for s in 0..1000 {
            m[(s, 0)] = 0.1 + (s as f64) * 1e-3;
            m[(s, 1)] = sym[s];
        }
        let r = select_regions_hpd(&m, 0.95).unwrap();
        assert_eq!(r.active, vec![true, false]);
    }

    #[test]
    fn sn_rule_examples() {
        let s = 100_000;
        let a = normal_draws(s, 0.0, 4);
        let b = normal_draws(s, 5.0, 5);
        let m = DMatrix::from_fn(s, 3, |i, j| match j {
            0 => a[i],
            1 => b[i],
            _ => 0.0,
        });
        let r = select_regions_sn(&m);
        assert_eq!(r.active, vec![false, true, false]);
        assert_eq!(r.flagged, vec![2]);
    }

    #[test]
    fn sn_tie_is_flagged() {
        // sd of (-2, -0.5, 0.5, 2) is about 1.58; half the mass is inside.
        let m = DMatrix::from_column_slice(4, 1, &[-2.0, -0.5, 0.5, 2.0]);
        let r = select_regions_sn(&m);
        assert_eq!(r.flagged, vec![0]);
        assert!(r.active[0]);
    }

    #[test]
    fn persistence_examples() {
        let p = |cols: &[&[bool]]| {
            let masks: Vec<Vec<bool>> = cols.iter().map(|c| c.to_vec()).collect();
            persistently_active(&masks).unwrap()
        };
        assert_eq!(p(&[&[true], &[true]]), vec![true]);
        assert_eq!(p(&[&[true], &[false], &[true], &[false]]), vec![false]);
        assert_eq!(p(&[&[false], &[true], &[true], &[false]]), vec![true]);
        assert!(persistently_active(&[vec![true]]).is_err());
    }

    #[test]
    fn predictive_unit_rate() {
        let alpha = DMatrix::zeros(10_000, 1);
        let beta = DMatrix::zeros(10_000, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = predictive_from_draws(&alpha, &beta, &[1.0], &[0.5, -1.0, 2.0], 0.95, &mut rng).unwrap();
        assert!((p.mean - 1.0).abs() < 0.05, "{}", p.mean);
        assert_eq!(p.rate_mean, 1.0);
        assert_eq!(p.rounded, 1);
    }

    #[test]
    fn predictive_overflow_guard() {
        let alpha = DMatrix::from_element(5, 1, 800.0);
        let beta = DMatrix::zeros(5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            predictive_from_draws(&alpha, &beta, &[1.0], &[0.0], 0.95, &mut rng),
            Err(Error::Overflow { .. })
        ));
    }
}
