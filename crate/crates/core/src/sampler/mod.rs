//! Adaptive Metropolis-within-Gibbs sampling.
//!
//! Every coordinate gets its own Gaussian random-walk proposal. During
//! burn-in the step sizes are reviewed every `adapt_interval` sweeps: a
//! coordinate accepting more than `accept_high` of its proposals has its
//! step multiplied by `adapt_factor`, one accepting less than `accept_low`
//! has it divided. After burn-in the steps are frozen.

mod diagnostics;
mod kernel;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec, ParamState};

pub use diagnostics::{gelman_rubin, gelman_rubin_series, rhat_table, RHat};
pub use kernel::{sweep, ChainState, CoordTally, Steps};

/// Sweeps between full recomputations of the cached linear predictor.
const REFRESH_INTERVAL: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Alpha,
    BetaTilde,
    LogLambda,
    LogTau,
    Rho,
}

impl Block {
    pub const ALL: [Block; 5] = [
        Block::Alpha,
        Block::BetaTilde,
        Block::LogLambda,
        Block::LogTau,
        Block::Rho,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Alpha => "alpha",
            Block::BetaTilde => "beta_tilde",
            Block::LogLambda => "log_lambda",
            Block::LogTau => "log_tau",
            Block::Rho => "rho",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Accepted and proposed counts per block.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlockTally {
    counts: [(u64, u64); 5],
}

impl BlockTally {
    pub fn add(&mut self, block: Block, (accepted, proposed): (u64, u64)) {
        let c = &mut self.counts[block.index()];
        c.0 += accepted;
        c.1 += proposed;
    }

    pub fn merge(&mut self, other: &BlockTally) {
        for b in Block::ALL {
            self.add(b, other.counts[b.index()]);
        }
    }

    /// `None` for blocks that were never updated.
    pub fn rate(&self, block: Block) -> Option<f64> {
        let (a, p) = self.counts[block.index()];
        (p > 0).then(|| a as f64 / p as f64)
    }

    pub fn rates(&self) -> BlockRates {
        BlockRates {
            alpha: self.rate(Block::Alpha),
            beta_tilde: self.rate(Block::BetaTilde),
            log_lambda: self.rate(Block::LogLambda),
            log_tau: self.rate(Block::LogTau),
            rho: self.rate(Block::Rho),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockRates {
    pub alpha: Option<f64>,
    pub beta_tilde: Option<f64>,
    pub log_lambda: Option<f64>,
    pub log_tau: Option<f64>,
    pub rho: Option<f64>,
}

impl BlockRates {
    pub fn get(&self, block: Block) -> Option<f64> {
        match block {
            Block::Alpha => self.alpha,
            Block::BetaTilde => self.beta_tilde,
            Block::LogLambda => self.log_lambda,
            Block::LogTau => self.log_tau,
            Block::Rho => self.rho,
        }
    }
}

/// Initial random-walk scale for each block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockSteps {
    pub alpha: f64,
    pub beta_tilde: f64,
    pub log_lambda: f64,
    pub log_tau: f64,
    pub rho: f64,
}

impl Default for BlockSteps {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta_tilde: 0.5,
            log_lambda: 1.0,
            log_tau: 0.1,
            rho: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub adapt_interval: usize,
    pub adapt_factor: f64,
    pub accept_low: f64,
    pub accept_high: f64,
    pub init_steps: BlockSteps,
    pub n_chains: usize,
    pub thin: usize,
    pub seed: u64,
    /// Adds scale-trading moves that leave `beta` fixed.
    pub rescale_moves: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iter: 150_000,
            burn_in: 60_000,
            adapt_interval: 500,
            adapt_factor: 1.1,
            accept_low: 0.30,
            accept_high: 0.50,
            init_steps: BlockSteps::default(),
            n_chains: 5,
            thin: 10,
            seed: 0,
            rescale_moves: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.burn_in >= self.n_iter {
            return fail("burn_in must be smaller than n_iter");
        }
        if !(0.0 < self.accept_low && self.accept_low < self.accept_high && self.accept_high < 1.0) {
            return fail("need 0 < accept_low < accept_high < 1");
        }
        if !(self.adapt_factor > 1.0) {
            return fail("adapt_factor must exceed 1");
        }
        if self.adapt_interval == 0 || self.thin == 0 || self.n_chains == 0 {
            return fail("adapt_interval, thin and n_chains must be positive");
        }
        let s = &self.init_steps;
        if [s.alpha, s.beta_tilde, s.log_lambda, s.log_tau, s.rho]
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return fail("initial steps must be finite and non-negative");
        }
        Ok(())
    }

    /// Number of retained draws per chain.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    pub fn chain_seed(&self, chain_id: usize) -> u64 {
        self.seed ^ chain_id as u64
    }
}

/// Step-size rule applied at each adaptation boundary.
pub fn adapt_step(observed_rate: f64, step: f64, config: &SamplerConfig) -> f64 {
    if observed_rate > config.accept_high {
        step * config.adapt_factor
    } else if observed_rate < config.accept_low {
        step / config.adapt_factor
    } else {
        step
    }
}

fn adapt_all(steps: &mut Steps, tally: &CoordTally, config: &SamplerConfig) {
    let rate = |&(a, p): &(u32, u32)| if p == 0 { None } else { Some(a as f64 / p as f64) };
    let adapt_vec = |s: &mut [f64], t: &[(u32, u32)]| {
        for (step, c) in s.iter_mut().zip(t) {
            if let Some(r) = rate(c) {
                *step = adapt_step(r, *step, config);
            }
        }
    };
    adapt_vec(&mut steps.alpha, &tally.alpha);
    adapt_vec(&mut steps.beta_tilde, &tally.beta_tilde);
    adapt_vec(&mut steps.log_lambda, &tally.log_lambda);
    if let Some(r) = rate(&tally.log_tau) {
        steps.log_tau = adapt_step(r, steps.log_tau, config);
    }
    if let Some(r) = rate(&tally.rho) {
        steps.rho = adapt_step(r, steps.rho, config);
    }
}

/// Block-level step sizes at one adaptation boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub alpha: f64,
    pub beta_tilde: f64,
    pub log_lambda: f64,
    pub log_tau: f64,
    pub rho: f64,
}

impl StepRecord {
    fn from_steps(iteration: usize, steps: &Steps) -> Self {
        Self {
            iteration,
            alpha: steps.block_scale(Block::Alpha),
            beta_tilde: steps.block_scale(Block::BetaTilde),
            log_lambda: steps.block_scale(Block::LogLambda),
            log_tau: steps.block_scale(Block::LogTau),
            rho: steps.block_scale(Block::Rho),
        }
    }
}

/// Retained draws and diagnostics of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub chain_id: usize,
    pub seed: u64,
    pub k: usize,
    pub j: usize,
    pub names: Vec<String>,
    /// One row per retained draw, columns as in `names`.
    pub draws: Vec<Vec<f64>>,
    /// Post-burn-in acceptance per block.
    pub accept_rates: BlockRates,
    /// Acceptance during the last adaptation window of burn-in.
    pub burn_in_accept: BlockRates,
    pub step_history: Vec<StepRecord>,
}

/// Column names for a model with `k` scalar and `j` spatial coefficients.
pub fn column_names(k: usize, j: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(k + 3 * j + 2);
    names.extend((0..k).map(|i| format!("alpha_{i}")));
    names.extend((0..j).map(|i| format!("beta_tilde_{i}")));
    names.extend((0..j).map(|i| format!("log_lambda_{i}")));
    names.push("log_tau".into());
    names.push("rho".into());
    names.extend((0..j).map(|i| format!("beta_{i}")));
    names
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.draws.iter().map(|r| r[index]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name).map(|i| self.column(i))
    }

    pub fn alpha_offset(&self) -> usize {
        0
    }

    pub fn beta_offset(&self) -> usize {
        self.k + 2 * self.j + 2
    }

    pub fn rho_index(&self) -> usize {
        self.k + 2 * self.j + 1
    }

    pub fn log_tau_index(&self) -> usize {
        self.k + 2 * self.j
    }

    /// Retained `beta` draws, one row per draw.
    pub fn beta_draws(&self) -> nalgebra::DMatrix<f64> {
        let off = self.beta_offset();
        nalgebra::DMatrix::from_fn(self.len(), self.j, |s, j| self.draws[s][off + j])
    }

    pub fn alpha_draws(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.len(), self.k, |s, k| self.draws[s][k])
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{}", self.names.join(","))?;
        for row in &self.draws {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads draws written by [`ChainOutput::write_csv`]. Diagnostics are
    /// not stored in the CSV and come back empty.
    pub fn read_csv(path: impl AsRef<Path>, chain_id: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)?;
        let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let k = names.iter().filter(|n| n.starts_with("alpha_")).count();
        let j = names.iter().filter(|n| n.starts_with("beta_tilde_")).count();
        if names != column_names(k, j) {
            return Err(Error::data(path, "unexpected chain column layout"));
        }
        let mut draws = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::data(path, e.to_string()))?;
            draws.push(row);
        }
        Ok(Self {
            chain_id,
            seed: 0,
            k,
            j,
            names,
            draws,
            accept_rates: BlockRates::default(),
            burn_in_accept: BlockRates::default(),
            step_history: Vec::new(),
        })
    }
}

/// The fixed starting point: `alpha = 0`, `beta_tilde = 0`, `lambda = 1`,
/// `tau = 1/J`, `rho = 0.5` (or 0 when fixed).
pub fn default_init(spec: &ModelSpec, k: usize) -> ParamState {
    let j = spec.dim();
    let mut s = ParamState::zeros(k, j);
    s.log_tau = match spec.tau_prior {
        crate::priors::ScalePrior::FixedOne => 0.0,
        _ => -(j as f64).ln(),
    };
    s.rho = if spec.rho_prior.is_fixed() { 0.0 } else { 0.5 };
    s
}

/// Overdispersed start for chains other than chain 0.
pub fn dispersed_init<R: Rng + ?Sized>(spec: &ModelSpec, k: usize, rng: &mut R) -> ParamState {
    let mut s = default_init(spec, k);
    let mut normal = |sd: f64| sd * rng.sample::<f64, _>(StandardNormal);
    s.alpha.iter_mut().for_each(|a| *a = normal(0.5));
    s.beta_tilde.iter_mut().for_each(|b| *b = normal(1.0));
    if !spec.lambda_prior.is_fixed() {
        s.log_lambda.iter_mut().for_each(|u| *u = normal(1.0));
    }
    if !spec.tau_prior.is_fixed() {
        s.log_tau += normal(1.0);
    }
    if let crate::priors::ScalePrior::TruncatedCauchy { dim } = spec.tau_prior {
        s.log_tau = s.log_tau.clamp(-(dim as f64).ln(), 0.0);
    }
    if !spec.rho_prior.is_fixed() {
        s.rho = 0.1 + 0.8 * rng.random::<f64>();
    }
    s
}

/// Runs one chain from its default (chain 0) or dispersed starting point.
pub fn run_chain(
    spec: &ModelSpec,
    data: &Dataset,
    config: &SamplerConfig,
    chain_id: usize,
) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.chain_seed(chain_id));
    let init = if chain_id == 0 {
        default_init(spec, data.k())
    } else {
        dispersed_init(spec, data.k(), &mut rng)
    };
    run_chain_with(spec, data, config, chain_id, init, &mut rng)
}

/// Runs one chain from an explicit starting state.
pub fn run_chain_from(
    spec: &ModelSpec,
    data: &Dataset,
    config: &SamplerConfig,
    chain_id: usize,
    init: ParamState,
) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.chain_seed(chain_id));
    run_chain_with(spec, data, config, chain_id, init, &mut rng)
}

fn run_chain_with(
    spec: &ModelSpec,
    data: &Dataset,
    config: &SamplerConfig,
    chain_id: usize,
    init: ParamState,
    rng: &mut ChaCha8Rng,
) -> Result<ChainOutput> {
    config.validate()?;
    if data.j() != spec.dim() {
        return Err(Error::Dimension(format!(
            "data has {} spatial columns, graph has {} nodes",
            data.j(),
            spec.dim()
        )));
    }
    let (k, j) = (data.k(), data.j());
    let mut chain = ChainState::new(init, spec, data)?;
    chain.set_rescale_moves(config.rescale_moves);
    if !chain.log_posterior().is_finite() {
        return Err(Error::NonFiniteStart { chain: chain_id });
    }

    let mut steps = Steps::uniform(k, j, &config.init_steps);
    let mut window = CoordTally::new(k, j);
    let mut post = BlockTally::default();
    let mut burn_in_accept = BlockRates::default();
    let mut step_history = vec![StepRecord::from_steps(0, &steps)];
    let names = column_names(k, j);
    let mut draws = Vec::with_capacity(config.retained());

    for iter in 0..config.n_iter {
        if iter > 0 && iter % REFRESH_INTERVAL == 0 {
            chain.refresh();
        }
        sweep(&mut chain, &steps, &mut window, rng);
        let done = iter + 1;
        if done <= config.burn_in {
            if done % config.adapt_interval == 0 || done == config.burn_in {
                if done == config.burn_in {
                    burn_in_accept = window.block_totals().rates();
                } else {
                    adapt_all(&mut steps, &window, config);
                }
                window.reset();
                step_history.push(StepRecord::from_steps(done, &steps));
            }
            continue;
        }
        if (done - config.burn_in).is_multiple_of(config.adapt_interval) {
            post.merge(&window.block_totals());
            window.reset();
            step_history.push(StepRecord::from_steps(done, &steps));
        }
        if (done - config.burn_in).is_multiple_of(config.thin) {
            let s = chain.state();
            let mut row = Vec::with_capacity(names.len());
            row.extend_from_slice(&s.alpha);
            row.extend_from_slice(&s.beta_tilde);
            row.extend_from_slice(&s.log_lambda);
            row.push(s.log_tau);
            row.push(s.rho);
            row.extend_from_slice(chain.beta());
            draws.push(row);
        }
    }
    post.merge(&window.block_totals());

    Ok(ChainOutput {
        chain_id,
        seed: config.chain_seed(chain_id),
        k,
        j,
        names,
        draws,
        accept_rates: post.rates(),
        burn_in_accept,
        step_history,
    })
}

/// Runs `config.n_chains` independent chains in parallel.
pub fn run_chains(spec: &ModelSpec, data: &Dataset, config: &SamplerConfig) -> Result<Vec<ChainOutput>> {
    (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(spec, data, config, c))
        .collect()
}

/// Post-burn-in draws of all chains stacked row-wise.
pub fn pooled_beta(chains: &[ChainOutput]) -> nalgebra::DMatrix<f64> {
    stack(chains.iter().map(ChainOutput::beta_draws).collect())
}

pub fn pooled_alpha(chains: &[ChainOutput]) -> nalgebra::DMatrix<f64> {
    stack(chains.iter().map(ChainOutput::alpha_draws).collect())
}

fn stack(parts: Vec<nalgebra::DMatrix<f64>>) -> nalgebra::DMatrix<f64> {
    let cols = parts.first().map_or(0, |m| m.ncols());
    let rows: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut out = nalgebra::DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in parts {
        out.rows_mut(at, m.nrows()).copy_from(&m);
        at += m.nrows();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_lattice;
    use crate::model::ModelName;
    use std::sync::Arc;

    fn cfg() -> SamplerConfig {
        SamplerConfig {
            n_iter: 400,
            burn_in: 200,
            adapt_interval: 50,
            thin: 5,
            n_chains: 2,
            seed: 17,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn adapt_rule() {
        let c = SamplerConfig {
            adapt_factor: 1.2,
            ..SamplerConfig::default()
        };
        assert!((adapt_step(0.60, 1.0, &c) - 1.2).abs() < 1e-15);
        assert!((adapt_step(0.10, 1.0, &c) - 1.0 / 1.2).abs() < 1e-15);
        assert_eq!(adapt_step(0.40, 1.0, &c), 1.0);
        assert_eq!(adapt_step(0.30, 1.0, &c), 1.0);
        assert_eq!(adapt_step(0.50, 1.0, &c), 1.0);
    }

    #[test]
    fn prior_scales_recovered_with_rescale_moves() {
        // Half-Cauchy scales have median 1, so each log scale is negative
        // half the time under the prior.
        let spec = ModelSpec::named(ModelName::Dhs, Arc::new(build_lattice(2, 2).unwrap()));
        let config = SamplerConfig {
            n_iter: 60_000,
            burn_in: 5_000,
            thin: 5,
            n_chains: 1,
            seed: 5,
            ..SamplerConfig::default()
        };
        let out = run_chain(&spec, &Dataset::empty(1, 4), &config, 0).unwrap();
        let below = |c: Vec<f64>| c.iter().filter(|&&v| v < 0.0).count() as f64 / c.len() as f64;
        let tau = below(out.column(out.log_tau_index()));
        let lam = below(out.column_by_name("log_lambda_2").unwrap());
        assert!((tau - 0.5).abs() < 0.05, "{tau}");
        assert!((lam - 0.5).abs() < 0.05, "{lam}");
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = SamplerConfig { burn_in: 400, ..cfg() };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig { accept_low: 0.6, ..cfg() };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig { adapt_factor: 1.0, ..cfg() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn output_shape_and_determinism() {
        let spec = ModelSpec::named(ModelName::Dlc, Arc::new(build_lattice(2, 2).unwrap()));
        let data = Dataset::empty(1, 4);
        let a = run_chain(&spec, &data, &cfg(), 1).unwrap();
        let b = run_chain(&spec, &data, &cfg(), 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), cfg().retained());
        assert_eq!(a.names.len(), 1 + 3 * 4 + 2);
        assert!(a.column(a.rho_index()).iter().all(|r| (0.0..1.0).contains(r)));
    }

    #[test]
    fn steps_frozen_after_burn_in() {
        let spec = ModelSpec::named(ModelName::Dlc, Arc::new(build_lattice(2, 2).unwrap()));
        let data = Dataset::empty(1, 4);
        let out = run_chain(&spec, &data, &cfg(), 0).unwrap();
        let post: Vec<_> = out.step_history.iter().filter(|r| r.iteration >= 200).collect();
        assert!(post.len() >= 2);
        for r in &post {
            assert_eq!(r.beta_tilde, post[0].beta_tilde);
            assert_eq!(r.rho, post[0].rho);
        }
    }

    #[test]
    fn csv_round_trip() {
        let spec = ModelSpec::named(ModelName::Hs, Arc::new(build_lattice(1, 3).unwrap()));
        let data = Dataset::empty(2, 3);
        let out = run_chain(&spec, &data, &cfg(), 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain_0.csv");
        out.write_csv(&path).unwrap();
        let back = ChainOutput::read_csv(&path, 0).unwrap();
        assert_eq!(back.draws, out.draws);
        assert_eq!((back.k, back.j), (2, 3));
        assert!(out.column(out.rho_index()).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn non_finite_start_rejected() {
        let spec = ModelSpec::named(ModelName::Dlc, Arc::new(build_lattice(1, 2).unwrap()));
        let data = Dataset::empty(1, 2);
        let mut init = default_init(&spec, 1);
        init.rho = 1.5;
        assert!(matches!(
            run_chain_from(&spec, &data, &cfg(), 0, init),
            Err(Error::NonFiniteStart { .. })
        ));
    }
}
