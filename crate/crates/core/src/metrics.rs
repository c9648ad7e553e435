//! Estimation, selection and forecast accuracy measures plus replicate
//! aggregation tables.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn rms(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    (count > 0).then(|| (sum / count as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    /// Absent when the truth has no active regions.
    pub signal_rmse: Option<f64>,
    /// Absent when every region is active.
    pub noise_rmse: Option<f64>,
    pub beta_rmse: f64,
    /// Out-of-sample prediction RMSE, when a test set was scored.
    pub pred_rmse: Option<f64>,
}

pub fn estimation_metrics(beta_hat: &[f64], beta_star: &[f64], mask: &[bool]) -> Result<EstimationReport> {
    if beta_hat.len() != beta_star.len() || beta_hat.len() != mask.len() || mask.is_empty() {
        return Err(Error::Dimension(format!(
            "estimate {}, truth {}, mask {}",
            beta_hat.len(),
            beta_star.len(),
            mask.len()
        )));
    }
    let err = |keep: bool| {
        beta_hat
            .iter()
            .zip(beta_star)
            .zip(mask)
            .filter(move |(_, &m)| m == keep)
            .map(|((h, s), _)| h - s)
    };
    Ok(EstimationReport {
        signal_rmse: rms(err(true)),
        noise_rmse: rms(err(false)),
        beta_rmse: rms(beta_hat.iter().zip(beta_star).map(|(h, s)| h - s)).unwrap_or(0.0),
        pred_rmse: None,
    })
}

impl EstimationReport {
    pub fn with_prediction(mut self, y: &[f64], y_hat: &[f64]) -> Self {
        self.pred_rmse = rms(y.iter().zip(y_hat).map(|(a, b)| a - b));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub false_neg: usize,
}

pub fn selection_metrics(active_hat: &[bool], mask: &[bool]) -> Result<SelectionReport> {
    if active_hat.len() != mask.len() {
        return Err(Error::Dimension(format!(
            "selection has {} regions, truth has {}",
            active_hat.len(),
            mask.len()
        )));
    }
    let count = |h: bool, t: bool| active_hat.iter().zip(mask).filter(|&(&a, &b)| a == h && b == t).count();
    let (tp, fp, tn, false_neg) = (count(true, true), count(true, false), count(false, false), count(false, true));
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    Ok(SelectionReport {
        fpr: ratio(fp, tn),
        fnr: ratio(false_neg, tp),
        tp,
        fp,
        tn,
        false_neg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub mae: f64,
    pub rmse: f64,
    pub max_ae: f64,
    /// Ratio of prediction spread to truth spread; absent for a constant
    /// truth or a single point.
    pub sdr: Option<f64>,
}

pub fn forecast_metrics(y: &[f64], y_hat: &[f64]) -> Result<ForecastReport> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(Error::Dimension(format!(
            "{} observations against {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    let t = y.len() as f64;
    let abs: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).collect();
    let centred_ss = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / t;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    let truth_ss = centred_ss(y);
    Ok(ForecastReport {
        mae: abs.iter().sum::<f64>() / t,
        rmse: (abs.iter().map(|e| e * e).sum::<f64>() / t).sqrt(),
        max_ae: abs.iter().copied().fold(0.0, f64::max),
        sdr: (truth_ss > 0.0).then(|| (centred_ss(y_hat) / truth_ss).sqrt()),
    })
}

/// Mean and sample sd of the defined values; `n` counts them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
}

pub fn aggregate(values: impl IntoIterator<Item = Option<f64>>) -> Aggregate {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    let n = v.len();
    if n == 0 {
        return Aggregate { mean: None, sd: None, n };
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = (n > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    Aggregate {
        mean: Some(mean),
        sd,
        n,
    }
}

/// Metrics of one fitted model on one simulated replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub signal: String,
    pub corr: f64,
    pub model: String,
    pub replicate: usize,
    pub estimation: EstimationReport,
    pub selection: SelectionReport,
}

pub const SIMULATION_METRICS: [&str; 6] = ["signal_rmse", "noise_rmse", "beta_rmse", "pred_rmse", "fpr", "fnr"];

impl ReplicateRecord {
    fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "signal_rmse" => self.estimation.signal_rmse,
            "noise_rmse" => self.estimation.noise_rmse,
            "beta_rmse" => Some(self.estimation.beta_rmse),
            "pred_rmse" => self.estimation.pred_rmse,
            "fpr" => self.selection.fpr,
            "fnr" => self.selection.fnr,
            _ => None,
        }
    }
}

/// One row of the simulation summary: a (signal, corr, model) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub signal: String,
    pub corr: f64,
    pub model: String,
    pub metrics: Vec<(String, Aggregate)>,
}

/// Groups replicates by (signal, corr, model), keeping first-seen order.
pub fn summarize_replicates(records: &[ReplicateRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, u64, String)> = Vec::new();
    let mut groups: BTreeMap<(String, u64, String), Vec<&ReplicateRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.signal.clone(), r.corr.to_bits(), r.model.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            SummaryRow {
                signal: key.0.clone(),
                corr: f64::from_bits(key.1),
                model: key.2.clone(),
                metrics: SIMULATION_METRICS
                    .iter()
                    .map(|m| (m.to_string(), aggregate(rs.iter().map(|r| r.metric(m)))))
                    .collect(),
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// Writes the summary as CSV: `signal,corr,model,<metric>_mean,<metric>_sd,...`.
pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["signal".to_string(), "corr".into(), "model".into()];
    for m in SIMULATION_METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_sd"));
    }
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let mut line = vec![r.signal.clone(), r.corr.to_string(), r.model.clone()];
        for (_, a) in &r.metrics {
            line.push(fmt_opt(a.mean));
            line.push(fmt_opt(a.sd));
        }
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// One method's row in a forecasting comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub method: String,
    pub report: ForecastReport,
}

pub fn write_forecast_csv(rows: &[ForecastRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "method,mae,rmse,max_ae,sdr")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{}",
            r.method,
            r.report.mae,
            r.report.rmse,
            r.report.max_ae,
            fmt_opt(r.report.sdr)
        )?;
    }
    out.flush()?;
    Ok(())
}
