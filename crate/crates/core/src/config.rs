//! Run configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backtest::BacktestConfig;
use crate::basis::{BasisConfig, TensorProductBasis};
use crate::error::{Error, Result};
use crate::graph::LatticeGraph;
use crate::inference::SelectionRule;
use crate::model::{ModelName, ModelSpec, Positivity};
use crate::priors::{RhoPrior, ScalePrior, DEFAULT_ETA};
use crate::sampler::SamplerConfig;
use crate::simgen::SimConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub simulation: Option<SimConfig>,
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
    pub basis: BasisSettings,
    pub selection: SelectionConfig,
    pub backtest: Option<BacktestConfig>,
    pub report: ReportConfig,
}

/// Where observations come from. Either `scenario` (a directory written
/// by the simulate command), `train` (combined CSV) or `y`/`w`/`x`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub scenario: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub w: Option<PathBuf>,
    pub x: Option<PathBuf>,
    /// Annual series with a `year` column, for backtests.
    pub series: Option<PathBuf>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    /// Edge list (`node_a,node_b`) for non-lattice graphs.
    pub edges: Option<PathBuf>,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub name: ModelName,
    /// Explicit priors override the named row.
    pub tau_prior: Option<ScalePrior>,
    pub lambda_prior: Option<ScalePrior>,
    pub rho_prior: Option<RhoPrior>,
    pub zeta: f64,
    pub eta: f64,
    pub positivity: Positivity,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            name: ModelName::Dlc,
            tau_prior: None,
            lambda_prior: None,
            rho_prior: None,
            zeta: 1.0,
            eta: DEFAULT_ETA,
            positivity: Positivity::Log,
        }
    }
}

impl ModelConfig {
    pub fn build(&self, graph: Arc<LatticeGraph>) -> Result<ModelSpec> {
        let (t, l, r) = self.name.priors();
        let spec = ModelSpec::new(
            self.tau_prior.unwrap_or(t),
            self.lambda_prior.unwrap_or(l),
            self.rho_prior.unwrap_or(r),
            graph,
        );
        Ok(spec
            .with_zeta(self.zeta)
            .map_err(|e| Error::Config(e.to_string()))?
            .with_eta(self.eta)
            .map_err(|e| Error::Config(e.to_string()))?
            .with_positivity(self.positivity))
    }

    /// Label used in output tables: the model name unless priors were overridden.
    pub fn label(&self) -> String {
        if self.tau_prior.is_none() && self.lambda_prior.is_none() && self.rho_prior.is_none() {
            self.name.to_string()
        } else {
            format!("{}+custom", self.name)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientGraph {
    /// CAR prior over the lattice of basis coefficients.
    #[default]
    Lattice,
    /// Spatial dependence dropped (`rho` fixed at zero).
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisSettings {
    pub enabled: bool,
    pub nodes_lon: usize,
    pub nodes_lat: usize,
    pub degree: usize,
    pub coefficient_graph: CoefficientGraph,
}

impl Default for BasisSettings {
    fn default() -> Self {
        let d = BasisConfig::default();
        Self {
            enabled: false,
            nodes_lon: d.nodes_lon,
            nodes_lat: d.nodes_lat,
            degree: d.degree,
            coefficient_graph: CoefficientGraph::Lattice,
        }
    }
}

impl BasisSettings {
    /// Basis spanning a `rows x cols` lattice, columns as longitude and
    /// rows as latitude.
    pub fn basis_for(&self, rows: usize, cols: usize) -> Result<TensorProductBasis> {
        if rows < 2 || cols < 2 {
            return Err(Error::Config("basis expansion needs at least a 2x2 lattice".into()));
        }
        TensorProductBasis::from_config(&BasisConfig {
            nodes_lon: self.nodes_lon,
            nodes_lat: self.nodes_lat,
            lon_range: (0.0, (cols - 1) as f64),
            lat_range: (0.0, (rows - 1) as f64),
            degree: self.degree,
        })
    }
}

/// Lattice cell centres as `(lon, lat) = (col, row)`.
pub fn lattice_locations(rows: usize, cols: usize) -> Vec<(f64, f64)> {
    (0..rows * cols).map(|j| ((j % cols) as f64, (j / cols) as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub rule: SelectionRule,
    pub level: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            rule: SelectionRule::Hpd,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub inputs: Vec<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative data paths are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        let d = &mut self.data;
        for p in [
            &mut d.scenario,
            &mut d.train,
            &mut d.test,
            &mut d.y,
            &mut d.w,
            &mut d.x,
            &mut d.series,
            &mut d.edges,
        ] {
            fix(p);
        }
        fix(&mut self.out);
        for p in &mut self.report.inputs {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if let Some(sim) = &self.simulation {
            sim.validate()?;
        }
        if !(self.selection.level > 0.0 && self.selection.level < 1.0) {
            return Err(Error::Config("selection level must lie in (0, 1)".into()));
        }
        let d = &self.data;
        let separate = [&d.y, &d.w, &d.x].iter().filter(|p| p.is_some()).count();
        if separate != 0 && separate != 3 {
            return Err(Error::Config("data.y, data.w and data.x go together".into()));
        }
        let sources = d.scenario.is_some() as usize + d.train.is_some() as usize + (separate == 3) as usize;
        if sources > 1 {
            return Err(Error::Config("give only one of data.scenario, data.train, data.y/w/x".into()));
        }
        Ok(())
    }

    /// Applies a command-line seed to every seeded component.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.sampler.seed = seed;
        if let Some(sim) = &mut self.simulation {
            sim.seed = seed;
        }
    }

    /// Graph from `data.edges` or `data.rows`/`data.cols`.
    pub fn graph(&self) -> Result<Option<LatticeGraph>> {
        match (&self.data.edges, self.data.rows, self.data.cols) {
            (Some(edges), rows, cols) => {
                let nodes = rows.zip(cols).map(|(r, c)| r * c).ok_or_else(|| {
                    Error::Config("an edge list needs data.rows and data.cols (or rows = 1, cols = nodes)".into())
                })?;
                LatticeGraph::from_edge_csv(edges, nodes).map(Some)
            }
            (None, Some(r), Some(c)) => LatticeGraph::lattice(r, c).map(Some),
            (None, None, None) => Ok(None),
            _ => Err(Error::Config("data.rows and data.cols go together".into())),
        }
    }
}
