//! Command implementations behind the `sgl` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backtest::run_backtest;
use crate::basis::tensor_basis_matrix;
use crate::config::{lattice_locations, CoefficientGraph, RunConfig};
use crate::error::{Error, Result};
use crate::graph::LatticeGraph;
use crate::inference::{
    posterior_predictive, select_regions_hpd, select_regions_sn, PosteriorSummary, SelectionResult, SelectionRule,
};
use crate::io;
use crate::metrics::{
    aggregate, estimation_metrics, forecast_metrics, selection_metrics, summarize_replicates, write_forecast_csv,
    write_summary_csv, ForecastReport, ForecastRow, ReplicateRecord,
};
use crate::model::{ColumnMoments, Dataset, ModelSpec};
use crate::priors::RhoPrior;
use crate::sampler::{pooled_alpha, pooled_beta, rhat_table, run_chains, BlockRates, ChainOutput, RHat};
use crate::simgen::{simulate, SimConfig};

/// R-hat threshold for declaring convergence.
pub const RHAT_THRESHOLD: f64 = 1.1;

#[derive(Debug, Parser)]
#[command(name = "sgl", version, about = "Spatial global-local shrinkage Poisson regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Caps the worker thread pool.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Exit successfully even when R-hat exceeds the threshold.
    #[arg(long, global = true)]
    pub allow_unconverged: bool,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenarios.
    Simulate,
    /// Run the sampler on a dataset.
    Fit,
    /// Select active regions from a fitted run.
    Select {
        /// Run directory written by `fit` (defaults to --out).
        run: Option<PathBuf>,
        #[arg(long)]
        rule: Option<String>,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Posterior predictive summaries for new rows.
    Predict {
        run: Option<PathBuf>,
        /// Combined CSV of new rows (defaults to the run's test set).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Rolling one-year-ahead forecast comparison.
    Backtest,
    /// Aggregate replicate and forecast results into tables.
    Report { inputs: Vec<PathBuf> },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed.or(cfg.seed) {
        cfg.apply_seed(seed);
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("sgl_out"));
    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg, &out),
        Command::Fit => cmd_fit(&cfg, &out, cli.allow_unconverged),
        Command::Select { run, rule, level } => {
            let rule = match rule.as_deref() {
                Some(r) => parse_rule(r)?,
                None => cfg.selection.rule,
            };
            cmd_select(run.as_deref().unwrap_or(&out), rule, level.unwrap_or(cfg.selection.level))
        }
        Command::Predict { run, data } => cmd_predict(&cfg, run.as_deref().unwrap_or(&out), data.as_deref()),
        Command::Backtest => cmd_backtest(&cfg, &out),
        Command::Report { inputs } => {
            let inputs = if inputs.is_empty() { cfg.report.inputs.clone() } else { inputs.clone() };
            cmd_report(&inputs, &out)
        }
    }
}

fn parse_rule(s: &str) -> Result<SelectionRule> {
    match s.to_ascii_uppercase().as_str() {
        "HPD" => Ok(SelectionRule::Hpd),
        "SN" => Ok(SelectionRule::Sn),
        _ => Err(Error::Config(format!("unknown selection rule {s:?}"))),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::data(dir, format!("cannot create output directory: {e}")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub replicate: usize,
    pub seed: u64,
    pub signal: String,
    pub config: SimConfig,
}

/// Writes one scenario directory per replicate.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sim = cfg
        .simulation
        .clone()
        .ok_or_else(|| Error::Config("simulate needs a [simulation] section".into()))?;
    sim.validate()?;
    create_dir(out)?;
    let mut seeds = Vec::new();
    for r in 0..sim.replicates.max(1) {
        let rep = sim.replicate(r);
        let data = simulate(&rep)?;
        let dir = out.join(format!("rep_{r:03}"));
        create_dir(&dir)?;
        io::write_combined_csv(dir.join("train.csv"), &data.train, None)?;
        io::write_combined_csv(dir.join("test.csv"), &data.test, None)?;
        io::write_region_values(dir.join("beta_star.csv"), "beta_star", &data.beta_star)?;
        io::write_mask(dir.join("mask.csv"), &data.active_mask)?;
        io::write_json(
            dir.join("scenario.json"),
            &ScenarioManifest {
                replicate: r,
                seed: rep.seed,
                signal: rep.pattern.label().to_string(),
                config: rep.clone(),
            },
        )?;
        seeds.push(rep.seed);
    }
    io::write_json(
        out.join("manifest.json"),
        &serde_json::json!({ "command": "simulate", "base_seed": sim.seed, "replicate_seeds": seeds, "config": sim }),
    )
}

struct Truth {
    beta_star: Vec<f64>,
    mask: Vec<bool>,
    signal: String,
    corr: f64,
    replicate: usize,
}

struct Loaded {
    train: Dataset,
    test: Option<Dataset>,
    graph: LatticeGraph,
    truth: Option<Truth>,
    test_path: Option<PathBuf>,
}

fn load_data(cfg: &RunConfig) -> Result<Loaded> {
    let d = &cfg.data;
    if let Some(dir) = &d.scenario {
        let manifest: ScenarioManifest = io::read_json(dir.join("scenario.json"))?;
        let (_, train) = io::read_combined_csv(dir.join("train.csv"))?;
        let test_path = dir.join("test.csv");
        let (_, test) = io::read_combined_csv(&test_path)?;
        let sim = &manifest.config;
        return Ok(Loaded {
            train: train.mark_standardized(),
            test: Some(test.mark_standardized()),
            graph: sim.graph()?,
            truth: Some(Truth {
                beta_star: io::read_region_values(dir.join("beta_star.csv"))?,
                mask: io::read_mask(dir.join("mask.csv"))?,
                signal: manifest.signal,
                corr: sim.rho_x,
                replicate: manifest.replicate,
            }),
            test_path: Some(test_path),
        });
    }
    let train = match (&d.train, &d.y, &d.w, &d.x) {
        (Some(p), ..) => io::read_combined_csv(p)?.1,
        (None, Some(y), Some(w), Some(x)) => io::read_separate_csv(y, w, x)?,
        _ => return Err(Error::Config("no training data configured".into())),
    };
    let test = d.test.as_ref().map(|p| io::read_combined_csv(p).map(|t| t.1)).transpose()?;
    let graph = cfg
        .graph()?
        .ok_or_else(|| Error::Config("data.rows/data.cols or data.edges required".into()))?;
    Ok(Loaded {
        train,
        test,
        graph,
        truth: None,
        test_path: d.test.clone(),
    })
}

/// What downstream commands need to know about a fitted run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    pub model: String,
    pub regions: usize,
    pub shape: Option<(usize, usize)>,
    pub basis: bool,
    pub n_chains: usize,
    pub test: Option<PathBuf>,
    pub moments: Option<(ColumnMoments, ColumnMoments)>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
struct ChainReport {
    chain_id: usize,
    seed: u64,
    draws: usize,
    accept_rates: BlockRates,
    burn_in_accept: BlockRates,
}

fn rhat_json(table: &[(String, RHat)]) -> serde_json::Value {
    table
        .iter()
        .map(|(name, r)| {
            let v = if r.value.is_finite() { serde_json::json!(r.value) } else { serde_json::json!("inf") };
            (name.clone(), v)
        })
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn standardize_split(train: Dataset, test: Option<Dataset>) -> Result<(Dataset, Option<Dataset>, (ColumnMoments, ColumnMoments))> {
    let mw = ColumnMoments::fit(train.w());
    let mx = ColumnMoments::fit(train.x());
    let apply = |d: &Dataset| -> Result<Dataset> {
        let (mut w, mut x) = (d.w().clone(), d.x().clone());
        mw.apply(&mut w);
        mx.apply(&mut x);
        Ok(Dataset::new(d.y().to_vec(), w, x)?.mark_standardized())
    };
    let train_s = apply(&train)?;
    let test_s = test.as_ref().map(apply).transpose()?;
    Ok((train_s, test_s, (mw, mx)))
}

/// Region-level coefficient draws; maps basis coefficients back through `M`.
fn region_beta(chains: &[ChainOutput], basis: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let gamma = pooled_beta(chains);
    match basis {
        Some(m) => gamma * m.transpose(),
        None => gamma,
    }
}

fn select(beta: &DMatrix<f64>, rule: SelectionRule, level: f64) -> Result<SelectionResult> {
    match rule {
        SelectionRule::Hpd => select_regions_hpd(beta, level),
        SelectionRule::Sn => Ok(select_regions_sn(beta)),
    }
}

fn read_chains(run: &Path, n: usize) -> Result<Vec<ChainOutput>> {
    (0..n)
        .map(|c| ChainOutput::read_csv(run.join(format!("chain_{c}.csv")), c))
        .collect()
}

fn read_basis(run: &Path, info: &RunInfo) -> Result<Option<DMatrix<f64>>> {
    if !info.basis {
        return Ok(None);
    }
    let path = run.join("basis_matrix.csv");
    let (_, rows) = {
        let mut r = csv::Reader::from_path(&path)?;
        let h: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        (h, r.records().collect::<std::result::Result<Vec<_>, _>>()?)
    };
    let cols = rows.first().map_or(0, |r| r.len());
    let mut m = DMatrix::zeros(rows.len(), cols);
    for (i, r) in rows.iter().enumerate() {
        for (c, v) in r.iter().enumerate() {
            m[(i, c)] = v.parse().map_err(|_| Error::data(&path, "invalid basis entry"))?;
        }
    }
    Ok(Some(m))
}

/// Samples the posterior and writes chains, summaries and diagnostics.
pub fn cmd_fit(cfg: &RunConfig, out: &Path, allow_unconverged: bool) -> Result<()> {
    let started = Instant::now();
    let loaded = load_data(cfg)?;
    let (mut train, mut test, moments) = if cfg.data.standardize {
        let (a, b, m) = standardize_split(loaded.train, loaded.test)?;
        (a, b, Some(m))
    } else {
        (loaded.train, loaded.test, None)
    };
    if train.j() != loaded.graph.len() {
        return Err(Error::data(
            cfg.data.train.clone().unwrap_or_default(),
            format!("{} spatial columns but the graph has {} nodes", train.j(), loaded.graph.len()),
        ));
    }
    create_dir(out)?;
    let mut graph = loaded.graph;
    let shape = graph.shape();
    let mut basis_m = None;
    let mut model_cfg = cfg.model.clone();
    if cfg.basis.enabled {
        let (rows, cols) = graph
            .shape()
            .ok_or_else(|| Error::Config("basis expansion needs a rectangular lattice".into()))?;
        let basis = cfg.basis.basis_for(rows, cols)?;
        let m = tensor_basis_matrix(&lattice_locations(rows, cols), &basis)?;
        io::write_matrix_csv(out.join("basis_matrix.csv"), &m, "basis_")?;
        train = train.with_spatial_design(train.x() * &m)?;
        test = test.map(|t| t.with_spatial_design(t.x() * &m)).transpose()?;
        graph = basis.coefficient_graph()?;
        if cfg.basis.coefficient_graph == CoefficientGraph::Independent {
            model_cfg.rho_prior = Some(RhoPrior::FixedZero);
        }
        basis_m = Some(m);
    }
    let regions = basis_m.as_ref().map_or(train.j(), |m| m.nrows());
    let spec: ModelSpec = model_cfg.build(Arc::new(graph))?;
    let chains = run_chains(&spec, &train, &cfg.sampler)?;
    for c in &chains {
        c.write_csv(out.join(format!("chain_{}.csv", c.chain_id)))?;
    }

    let rhat = if chains.len() >= 2 {
        rhat_table(&chains, spec.rho_prior.is_fixed(), spec.tau_prior.is_fixed())?
    } else {
        Vec::new()
    };
    let max_rhat = rhat.iter().map(|(_, r)| r.value).fold(f64::NAN, f64::max);
    let converged = rhat.iter().all(|(_, r)| r.value < RHAT_THRESHOLD);

    // Posterior summary of the monitored quantities.
    let beta = region_beta(&chains, basis_m.as_ref());
    let alpha = pooled_alpha(&chains);
    let first = &chains[0];
    let scalar = |idx: usize| -> Vec<f64> { chains.iter().flat_map(|c| c.column(idx)).collect() };
    let mut names: Vec<String> = (0..alpha.ncols()).map(|k| format!("alpha_{k}")).collect();
    names.extend((0..beta.ncols()).map(|j| format!("beta_{j}")));
    names.push("log_tau".into());
    names.push("rho".into());
    let s = alpha.nrows();
    let log_tau = scalar(first.log_tau_index());
    let rho = scalar(first.rho_index());
    let all = DMatrix::from_fn(s, names.len(), |i, c| {
        let (ka, kb) = (alpha.ncols(), beta.ncols());
        if c < ka {
            alpha[(i, c)]
        } else if c < ka + kb {
            beta[(i, c - ka)]
        } else if c == ka + kb {
            log_tau[i]
        } else {
            rho[i]
        }
    });
    let summary = PosteriorSummary::from_draws(&all, cfg.selection.level)?;
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record(["parameter", "mean", "sd", "hpd_lower", "hpd_upper"])?;
    for (n, p) in names.iter().zip(&summary.params) {
        w.write_record([n.clone(), p.mean.to_string(), p.sd.to_string(), p.hpd_lower.to_string(), p.hpd_upper.to_string()])?;
    }
    w.flush()?;

    if let Some(truth) = &loaded.truth {
        let beta_hat: Vec<f64> = (0..beta.ncols()).map(|j| beta.column(j).mean()).collect();
        let mut estimation = estimation_metrics(&beta_hat, &truth.beta_star, &truth.mask)?;
        if let Some(test) = &test {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampler.seed);
            let y: Vec<f64> = test.y().iter().map(|&v| v as f64).collect();
            let yhat = (0..test.n())
                .map(|i| {
                    let wr: Vec<f64> = test.w().row(i).iter().copied().collect();
                    let xr: Vec<f64> = test.x().row(i).iter().copied().collect();
                    posterior_predictive(&chains, &wr, &xr, cfg.selection.level, &mut rng).map(|p| p.mean)
                })
                .collect::<Result<Vec<_>>>()?;
            estimation = estimation.with_prediction(&y, &yhat);
        }
        let selection = select(&beta, cfg.selection.rule, cfg.selection.level)?;
        io::write_json(
            out.join("metrics.json"),
            &ReplicateRecord {
                signal: truth.signal.clone(),
                corr: truth.corr,
                model: cfg.model.label(),
                replicate: truth.replicate,
                estimation,
                selection: selection_metrics(&selection.active, &truth.mask)?,
            },
        )?;
    }

    let info = RunInfo {
        model: cfg.model.label(),
        regions,
        shape,
        basis: basis_m.is_some(),
        n_chains: chains.len(),
        test: loaded.test_path.clone(),
        moments,
        seed: cfg.sampler.seed,
    };
    io::write_json(out.join("run.json"), &info)?;
    let rho_constant = rho.iter().all(|&r| r == rho[0]);
    io::write_json(
        out.join("manifest.json"),
        &serde_json::json!({
            "command": "fit",
            "model": cfg.model.label(),
            "priors": { "tau": spec.tau_prior.to_string(), "lambda": spec.lambda_prior.to_string(), "rho": spec.rho_prior.to_string() },
            "chains": chains.iter().map(|c| ChainReport {
                chain_id: c.chain_id,
                seed: c.seed,
                draws: c.len(),
                accept_rates: c.accept_rates,
                burn_in_accept: c.burn_in_accept,
            }).collect::<Vec<_>>(),
            "rhat": rhat_json(&rhat),
            "max_rhat": if max_rhat.is_finite() { serde_json::json!(max_rhat) } else { serde_json::json!(null) },
            "converged": converged,
            "rho_constant": rho_constant,
            "wall_seconds": started.elapsed().as_secs_f64(),
            "config": cfg,
        }),
    )?;
    if !converged && !allow_unconverged {
        let worst = rhat
            .iter()
            .filter(|(_, r)| !(r.value < RHAT_THRESHOLD))
            .map(|(n, _)| n.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::Convergence(format!("R-hat >= {RHAT_THRESHOLD} for {worst}")));
    }
    Ok(())
}

/// Writes `selection.csv` and, for lattices, `selection_grid.csv`.
pub fn cmd_select(run: &Path, rule: SelectionRule, level: f64) -> Result<()> {
    let info: RunInfo = io::read_json(run.join("run.json"))?;
    let chains = read_chains(run, info.n_chains)?;
    let basis = read_basis(run, &info)?;
    let beta = region_beta(&chains, basis.as_ref());
    let sel = select(&beta, rule, level)?;
    let summary = PosteriorSummary::from_draws(&beta, level)?;
    let mut w = csv::Writer::from_path(run.join("selection.csv"))?;
    w.write_record(["region_id", "row", "col", "active", "hpd_lower", "hpd_upper", "post_mean", "post_sd"])?;
    for (j, p) in summary.params.iter().enumerate() {
        let (r, c) = info
            .shape
            .map_or((String::from("NA"), String::from("NA")), |(_, cols)| ((j / cols).to_string(), (j % cols).to_string()));
        w.write_record([
            j.to_string(),
            r,
            c,
            u8::from(sel.active[j]).to_string(),
            p.hpd_lower.to_string(),
            p.hpd_upper.to_string(),
            p.mean.to_string(),
            p.sd.to_string(),
        ])?;
    }
    w.flush()?;
    if let Some((rows, cols)) = info.shape {
        io::write_grid(run.join("selection_grid.csv"), &sel.active, rows, cols)?;
    }
    io::write_json(run.join("selection.json"), &sel)
}

/// Writes `predictions.csv` (and forecast metrics when counts are present).
pub fn cmd_predict(cfg: &RunConfig, run: &Path, data: Option<&Path>) -> Result<()> {
    let info: RunInfo = io::read_json(run.join("run.json"))?;
    let path = data
        .map(Path::to_path_buf)
        .or_else(|| cfg.data.test.clone())
        .or_else(|| info.test.clone())
        .ok_or_else(|| Error::Config("no rows to predict: pass --data or set data.test".into()))?;
    let (_, new) = io::read_combined_csv(&path)?;
    let (mut w_new, mut x_new) = (new.w().clone(), new.x().clone());
    if let Some((mw, mx)) = &info.moments {
        mw.apply(&mut w_new);
        mx.apply(&mut x_new);
    }
    if let Some(m) = read_basis(run, &info)? {
        x_new = &x_new * m;
    }
    let chains = read_chains(run, info.n_chains)?;
    let mut rng = ChaCha8Rng::seed_from_u64(info.seed);
    let mut w = csv::Writer::from_path(run.join("predictions.csv"))?;
    w.write_record(["row", "observed", "mean", "rounded", "hpd_lower", "hpd_upper"])?;
    let mut means = Vec::with_capacity(new.n());
    for i in 0..new.n() {
        let wr: Vec<f64> = w_new.row(i).iter().copied().collect();
        let xr: Vec<f64> = x_new.row(i).iter().copied().collect();
        let p = posterior_predictive(&chains, &wr, &xr, cfg.selection.level, &mut rng)?;
        w.write_record([
            i.to_string(),
            new.y()[i].to_string(),
            p.mean.to_string(),
            p.rounded.to_string(),
            p.hpd_lower.to_string(),
            p.hpd_upper.to_string(),
        ])?;
        means.push(p.mean);
    }
    w.flush()?;
    if new.n() > 0 {
        let y: Vec<f64> = new.y().iter().map(|&v| v as f64).collect();
        io::write_json(run.join("prediction_metrics.json"), &forecast_metrics(&y, &means)?)?;
    }
    Ok(())
}

/// Rolling one-year-ahead comparison over `data.series`.
pub fn cmd_backtest(cfg: &RunConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let bt = cfg
        .backtest
        .clone()
        .ok_or_else(|| Error::Config("backtest needs a [backtest] section".into()))?;
    let series_path = cfg
        .data
        .series
        .as_ref()
        .ok_or_else(|| Error::Config("backtest needs data.series".into()))?;
    let series = io::read_time_series_csv(series_path)?;
    let graph = cfg
        .graph()?
        .ok_or_else(|| Error::Config("data.rows/data.cols or data.edges required".into()))?;
    let template = cfg.model.build(Arc::new(graph))?;
    let result = run_backtest(&series, &bt, &template, &cfg.sampler)?;
    create_dir(out)?;
    result.write_predictions_csv(out.join("predictions.csv"))?;
    write_forecast_csv(&result.table, out.join("forecast_table.csv"))?;
    result.write_masks_csv(out.join("masks.csv"))?;
    io::write_json(
        out.join("manifest.json"),
        &serde_json::json!({
            "command": "backtest",
            "targets": bt.target_years(),
            "table": result.table,
            "wall_seconds": started.elapsed().as_secs_f64(),
            "config": cfg,
        }),
    )
}

fn collect_files(dir: &Path, name: &str, found: &mut Vec<PathBuf>) -> Result<()> {
    if !dir.is_dir() {
        return Err(Error::data(dir, "not a directory"));
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, name, found)?;
        } else if p.file_name().is_some_and(|f| f == name) {
            found.push(p);
        }
    }
    Ok(())
}

fn read_forecast_table(path: &Path) -> Result<Vec<ForecastRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| Error::data(path, "invalid number")) };
            Ok(ForecastRow {
                method: rec[0].to_string(),
                report: ForecastReport {
                    mae: num(1)?,
                    rmse: num(2)?,
                    max_ae: num(3)?,
                    sdr: if &rec[4] == "NA" { None } else { Some(num(4)?) },
                },
            })
        })
        .collect()
}

/// Aggregates `metrics.json` files (simulation replicates) and
/// `forecast_table.csv` files (backtests) found under the inputs.
pub fn cmd_report(inputs: &[PathBuf], out: &Path) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Config("report needs at least one input directory".into()));
    }
    let (mut metric_files, mut forecast_files) = (Vec::new(), Vec::new());
    for dir in inputs {
        collect_files(dir, "metrics.json", &mut metric_files)?;
        collect_files(dir, "forecast_table.csv", &mut forecast_files)?;
    }
    if metric_files.is_empty() && forecast_files.is_empty() {
        return Err(Error::data(&inputs[0], "no metrics.json or forecast_table.csv found"));
    }
    create_dir(out)?;
    if !metric_files.is_empty() {
        let records = metric_files.iter().map(io::read_json).collect::<Result<Vec<ReplicateRecord>>>()?;
        write_summary_csv(&summarize_replicates(&records), out.join("simulation_summary.csv"))?;
    }
    if !forecast_files.is_empty() {
        let mut rows: Vec<ForecastRow> = Vec::new();
        for f in &forecast_files {
            rows.extend(read_forecast_table(f)?);
        }
        let mut methods: Vec<String> = Vec::new();
        for r in &rows {
            if !methods.contains(&r.method) {
                methods.push(r.method.clone());
            }
        }
        let mut w = csv::Writer::from_path(out.join("forecast_summary.csv"))?;
        w.write_record([
            "method", "runs", "mae_mean", "mae_sd", "rmse_mean", "rmse_sd", "max_ae_mean", "max_ae_sd", "sdr_mean", "sdr_sd",
        ])?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        for m in methods {
            let sel: Vec<&ForecastReport> = rows.iter().filter(|r| r.method == m).map(|r| &r.report).collect();
            let aggs = [
                aggregate(sel.iter().map(|r| Some(r.mae))),
                aggregate(sel.iter().map(|r| Some(r.rmse))),
                aggregate(sel.iter().map(|r| Some(r.max_ae))),
                aggregate(sel.iter().map(|r| r.sdr)),
            ];
            let mut rec = vec![m.clone(), sel.len().to_string()];
            for a in aggs {
                rec.push(fmt(a.mean));
                rec.push(fmt(a.sd));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}
