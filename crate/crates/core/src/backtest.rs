//! Rolling one-year-ahead forecasting over an annual series.
//!
//! For every target year the models are fitted on the rows of strictly
//! earlier years only, then asked for the target year's count.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{fixed_region_forecast, moving_average_forecast, tstat_screen};
use crate::error::{Error, Result};
use crate::inference::{persistently_active, posterior_predictive, select_regions_hpd, select_regions_sn, SelectionRule};
use crate::metrics::{forecast_metrics, ForecastRow};
use crate::model::{ColumnMoments, Dataset, ModelName, ModelSpec};
use crate::sampler::{pooled_beta, run_chains, SamplerConfig};
use crate::simgen::replicate_seed;

/// Annual observations: one dataset row per year.
#[derive(Debug, Clone)]
pub struct TimeSeriesData {
    years: Vec<i64>,
    data: Dataset,
}

impl TimeSeriesData {
    pub fn new(years: Vec<i64>, data: Dataset) -> Result<Self> {
        if years.len() != data.n() {
            return Err(Error::Dimension(format!(
                "{} years for {} observations",
                years.len(),
                data.n()
            )));
        }
        if years.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("years must be strictly increasing".into()));
        }
        Ok(Self { years, data })
    }

    pub fn years(&self) -> &[i64] {
        &self.years
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn row_of(&self, year: i64) -> Option<usize> {
        self.years.binary_search(&year).ok()
    }

    /// Indices of every row strictly before `target`.
    pub fn training_rows(&self, target: i64) -> Vec<usize> {
        (0..self.years.len()).filter(|&i| self.years[i] < target).collect()
    }

    /// Training set (years before `target`) and the target row, standardized
    /// with training moments when asked.
    pub fn split(&self, target: i64, standardize: bool) -> Result<(Dataset, Vec<f64>, Vec<f64>, u64)> {
        let row = self
            .row_of(target)
            .ok_or_else(|| Error::InvalidArgument(format!("year {target} not in the series")))?;
        let train_rows = self.training_rows(target);
        let mut w = self.data.w().select_rows(train_rows.iter());
        let mut x = self.data.x().select_rows(train_rows.iter());
        let mut w_new = self.data.w().rows(row, 1).into_owned();
        let mut x_new = self.data.x().rows(row, 1).into_owned();
        if standardize {
            let mw = ColumnMoments::fit(&w);
            let mx = ColumnMoments::fit(&x);
            mw.apply(&mut w);
            mw.apply(&mut w_new);
            mx.apply(&mut x);
            mx.apply(&mut x_new);
        }
        let y = train_rows.iter().map(|&i| self.data.y()[i]).collect();
        let train = Dataset::new(y, w, x)?;
        Ok((
            if standardize { train.mark_standardized() } else { train },
            w_new.iter().copied().collect(),
            x_new.iter().copied().collect(),
            self.data.y()[row],
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Sgl(ModelName),
    /// Mean of the previous `ma_window` years.
    MovingAverage,
    /// Wald screening, then a GLM on the averaged selected regions.
    TStat,
    /// GLM on the average over a fixed, user-supplied region.
    FixedRegion,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Sgl(m) => write!(f, "{m}"),
            Method::MovingAverage => f.write_str("MA"),
            Method::TStat => f.write_str("TStat"),
            Method::FixedRegion => f.write_str("UA"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ma" => Ok(Method::MovingAverage),
            "tstat" | "t-stat" => Ok(Method::TStat),
            "ua" => Ok(Method::FixedRegion),
            _ => s.parse().map(Method::Sgl),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    pub first_target: i64,
    pub last_target: i64,
    pub ma_window: usize,
    pub methods: Vec<Method>,
    /// Region indices averaged by the fixed-region method.
    pub region: Vec<usize>,
    pub tstat_alpha: f64,
    pub hpd_level: f64,
    pub selection_rule: SelectionRule,
    pub standardize: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            first_target: 0,
            last_target: 0,
            ma_window: 5,
            methods: vec![Method::Sgl(ModelName::Dlc), Method::MovingAverage, Method::TStat],
            region: Vec::new(),
            tstat_alpha: 0.05,
            hpd_level: 0.95,
            selection_rule: SelectionRule::Hpd,
            standardize: true,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self, series: &TimeSeriesData) -> Result<()> {
        if self.last_target < self.first_target {
            return Err(Error::Config("last_target precedes first_target".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no backtest methods".into()));
        }
        if self.methods.contains(&Method::FixedRegion) && self.region.is_empty() {
            return Err(Error::Config("fixed-region method needs a region".into()));
        }
        if self.region.iter().any(|&r| r >= series.data().j()) {
            return Err(Error::Config("region index outside the spatial grid".into()));
        }
        for year in self.first_target..=self.last_target {
            if series.row_of(year).is_none() {
                return Err(Error::InvalidArgument(format!(
                    "target year {year} outside the data range"
                )));
            }
        }
        let history = series.training_rows(self.first_target).len();
        let needed = self.ma_window.max(series.data().k() + 2);
        if history < needed {
            return Err(Error::InvalidArgument(format!(
                "only {history} years precede {}, need at least {needed}",
                self.first_target
            )));
        }
        Ok(())
    }

    pub fn target_years(&self) -> Vec<i64> {
        (self.first_target..=self.last_target).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearPrediction {
    pub year: i64,
    pub observed: u64,
    pub prediction: f64,
    pub hpd: Option<(f64, f64)>,
    /// Regions the method used for this year, when it selects any.
    pub active: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub years: Vec<YearPrediction>,
    pub persistent: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub methods: Vec<MethodResult>,
    pub table: Vec<ForecastRow>,
}

#[allow(clippy::too_many_arguments)]
fn sgl_year(
    name: ModelName,
    template: &ModelSpec,
    sampler: &SamplerConfig,
    train: &Dataset,
    w_new: &[f64],
    x_new: &[f64],
    cfg: &BacktestConfig,
    seed: u64,
) -> Result<(f64, (f64, f64), Vec<bool>)> {
    let spec = ModelSpec {
        zeta: template.zeta,
        eta: template.eta,
        positivity: template.positivity,
        ..ModelSpec::named(name, template.graph.clone())
    };
    let sampler = SamplerConfig {
        seed,
        ..sampler.clone()
    };
    let chains = run_chains(&spec, train, &sampler)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = posterior_predictive(&chains, w_new, x_new, cfg.hpd_level, &mut rng)?;
    let beta = pooled_beta(&chains);
    let mask = match cfg.selection_rule {
        SelectionRule::Hpd => select_regions_hpd(&beta, cfg.hpd_level)?.active,
        SelectionRule::Sn => select_regions_sn(&beta).active,
    };
    Ok((pred.mean, (pred.hpd_lower, pred.hpd_upper), mask))
}

fn row_matrix(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v)
}

/// Runs every configured method over the target years.
pub fn run_backtest(
    series: &TimeSeriesData,
    cfg: &BacktestConfig,
    template: &ModelSpec,
    sampler: &SamplerConfig,
) -> Result<BacktestResult> {
    cfg.validate(series)?;
    if template.dim() != series.data().j() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes, series has {} spatial columns",
            template.dim(),
            series.data().j()
        )));
    }
    let j = series.data().j();
    let region_mask: Vec<bool> = (0..j).map(|r| cfg.region.contains(&r)).collect();
    let mut methods = Vec::new();
    for &method in &cfg.methods {
        let mut years = Vec::new();
        for (idx, year) in cfg.target_years().into_iter().enumerate() {
            let (train, w_new, x_new, observed) = series.split(year, cfg.standardize)?;
            let y_train: Vec<f64> = train.y().iter().map(|&v| v as f64).collect();
            let (prediction, hpd, active) = match method {
                Method::Sgl(name) => {
                    let seed = replicate_seed(sampler.seed, idx);
                    let (p, h, m) = sgl_year(name, template, sampler, &train, &w_new, &x_new, cfg, seed)?;
                    (p, Some(h), Some(m))
                }
                Method::MovingAverage => (moving_average_forecast(&y_train, cfg.ma_window)?, None, None),
                Method::TStat => {
                    let screen = tstat_screen(&y_train, train.w(), train.x(), cfg.tstat_alpha)?;
                    let mask = screen.pooled_mask();
                    let f = fixed_region_forecast(&y_train, train.w(), train.x(), &mask, &row_matrix(&w_new), &row_matrix(&x_new))?;
                    (f.predictions[0], None, Some(screen.active))
                }
                Method::FixedRegion => {
                    let f = fixed_region_forecast(
                        &y_train,
                        train.w(),
                        train.x(),
                        &region_mask,
                        &row_matrix(&w_new),
                        &row_matrix(&x_new),
                    )?;
                    (f.predictions[0], None, None)
                }
            };
            years.push(YearPrediction {
                year,
                observed,
                prediction,
                hpd,
                active,
            });
        }
        let masks: Vec<Vec<bool>> = years.iter().filter_map(|y| y.active.clone()).collect();
        let persistent = if masks.len() >= 2 && masks.len() == years.len() {
            Some(persistently_active(&masks)?)
        } else {
            None
        };
        methods.push(MethodResult {
            method,
            years,
            persistent,
        });
    }
    let table = methods
        .iter()
        .map(|m| {
            let y: Vec<f64> = m.years.iter().map(|p| p.observed as f64).collect();
            let yhat: Vec<f64> = m.years.iter().map(|p| p.prediction).collect();
            Ok(ForecastRow {
                method: m.method.to_string(),
                report: forecast_metrics(&y, &yhat)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BacktestResult { methods, table })
}

impl BacktestResult {
    pub fn method(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Per-year predictions: `year,observed,method,prediction,hpd_lower,hpd_upper`.
    pub fn write_predictions_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["year", "observed", "method", "prediction", "hpd_lower", "hpd_upper"])?;
        for m in &self.methods {
            for p in &m.years {
                let (lo, hi) = p.hpd.map_or((String::from("NA"), String::from("NA")), |(a, b)| (a.to_string(), b.to_string()));
                w.write_record([
                    p.year.to_string(),
                    p.observed.to_string(),
                    m.method.to_string(),
                    p.prediction.to_string(),
                    lo,
                    hi,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Selection masks: `method,year,region_id,active`, plus `persistent`
    /// rows with year `NA`.
    pub fn write_masks_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "year", "region_id", "active"])?;
        for m in &self.methods {
            for p in &m.years {
                if let Some(mask) = &p.active {
                    for (r, &a) in mask.iter().enumerate() {
                        w.write_record([m.method.to_string(), p.year.to_string(), r.to_string(), u8::from(a).to_string()])?;
                    }
                }
            }
            if let Some(mask) = &m.persistent {
                for (r, &a) in mask.iter().enumerate() {
                    w.write_record([m.method.to_string(), "persistent".into(), r.to_string(), u8::from(a).to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}
