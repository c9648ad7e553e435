//! Synthetic scenarios: CAR-correlated spatial covariates, planted active
//! regions and Poisson responses.

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CarField, LatticeGraph};
use crate::model::{ColumnMoments, Dataset};

/// Largest linear predictor magnitude accepted when drawing responses.
pub const MAX_SIM_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[serde(try_from = "PatternRepr")]
pub enum Pattern {
    /// One rectangular block centred in the grid.
    Adjacent { block_rows: usize, block_cols: usize },
    /// Isolated cells at pairwise graph distance at least `min_distance`.
    Scattered { count: usize, min_distance: usize },
    /// Row-major mask supplied by the caller.
    Custom { mask: Vec<bool> },
}

/// Accepts either a bare name (`"adjacent"`) or a full table.
#[derive(Deserialize)]
#[serde(untagged)]
enum PatternRepr {
    Name(String),
    Table(PatternTable),
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PatternTable {
    Adjacent { block_rows: usize, block_cols: usize },
    Scattered { count: usize, min_distance: usize },
    Custom { mask: Vec<bool> },
}

impl TryFrom<PatternRepr> for Pattern {
    type Error = Error;

    fn try_from(r: PatternRepr) -> Result<Self> {
        Ok(match r {
            PatternRepr::Name(s) => s.parse()?,
            PatternRepr::Table(PatternTable::Adjacent { block_rows, block_cols }) => {
                Pattern::Adjacent { block_rows, block_cols }
            }
            PatternRepr::Table(PatternTable::Scattered { count, min_distance }) => {
                Pattern::Scattered { count, min_distance }
            }
            PatternRepr::Table(PatternTable::Custom { mask }) => Pattern::Custom { mask },
        })
    }
}

impl Pattern {
    pub fn adjacent() -> Self {
        Pattern::Adjacent {
            block_rows: 3,
            block_cols: 4,
        }
    }

    pub fn scattered() -> Self {
        Pattern::Scattered {
            count: 6,
            min_distance: 3,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Pattern::Adjacent { .. } => "adjacent",
            Pattern::Scattered { .. } => "scattered",
            Pattern::Custom { .. } => "custom",
        }
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adjacent" => Ok(Self::adjacent()),
            "scattered" => Ok(Self::scattered()),
            other => Err(Error::Config(format!("unknown pattern `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    /// Standardized columns divided by the root training size (unit norm).
    #[default]
    Divide,
    Multiply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub rows: usize,
    pub cols: usize,
    pub rho_x: f64,
    pub pattern: Pattern,
    pub b_star: f64,
    pub alpha_star: Vec<f64>,
    pub scale_mode: ScaleMode,
    pub seed: u64,
    /// Number of replicates written by the simulate command.
    pub replicates: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_train: 100,
            n_test: 50,
            rows: 20,
            cols: 25,
            rho_x: 0.4,
            pattern: Pattern::adjacent(),
            b_star: 6.0,
            alpha_star: vec![-0.25, 0.25],
            scale_mode: ScaleMode::Divide,
            seed: 1,
            replicates: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train + self.n_test == 0 {
            return Err(Error::Config("need at least one observation".into()));
        }
        if !(0.0..1.0).contains(&self.rho_x) {
            return Err(Error::Config(format!("rho_x = {} outside [0, 1)", self.rho_x)));
        }
        if !self.b_star.is_finite() || self.alpha_star.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn graph(&self) -> Result<LatticeGraph> {
        LatticeGraph::lattice(self.rows, self.cols)
    }

    /// Same scenario with the seed of replicate `r`.
    pub fn replicate(&self, r: usize) -> Self {
        Self {
            seed: replicate_seed(self.seed, r),
            ..self.clone()
        }
    }
}

/// Seed for replicate `r` derived from a base seed.
pub fn replicate_seed(base: u64, r: usize) -> u64 {
    base ^ (r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Van der Corput radical inverse of `i` in `base`.
fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut out, mut f) = (0.0, inv);
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// Active-cell mask for a `rows x cols` lattice, row-major.
pub fn gen_pattern(pattern: &Pattern, rows: usize, cols: usize) -> Result<Vec<bool>> {
    let j = rows * cols;
    let mask = match pattern {
        Pattern::Custom { mask } => {
            if mask.len() != j {
                return Err(Error::Config(format!(
                    "custom mask has {} cells, lattice has {j}",
                    mask.len()
                )));
            }
            mask.clone()
        }
        &Pattern::Adjacent {
            block_rows,
            block_cols,
        } => {
            if block_rows == 0 || block_cols == 0 || block_rows > rows || block_cols > cols {
                return Err(Error::Config(format!(
                    "{block_rows}x{block_cols} block does not fit a {rows}x{cols} lattice"
                )));
            }
            let (r0, c0) = ((rows - block_rows) / 2, (cols - block_cols) / 2);
            (0..j)
                .map(|idx| {
                    let (r, c) = (idx / cols, idx % cols);
                    (r0..r0 + block_rows).contains(&r) && (c0..c0 + block_cols).contains(&c)
                })
                .collect()
        }
        &Pattern::Scattered {
            count,
            min_distance,
        } => {
            // Low-discrepancy candidate order, then every cell as a fallback.
            let candidates = (1..4 * j).map(|i| {
                let r = (radical_inverse(i, 2) * rows as f64) as usize;
                let c = (radical_inverse(i, 3) * cols as f64) as usize;
                r * cols + c
            });
            let mut chosen: Vec<usize> = Vec::with_capacity(count);
            for cell in candidates.chain(0..j) {
                if chosen.len() == count {
                    break;
                }
                let far = chosen.iter().all(|&o| {
                    let (r1, c1) = (cell / cols, cell % cols);
                    let (r2, c2) = (o / cols, o % cols);
                    r1.abs_diff(r2) + c1.abs_diff(c2) >= min_distance
                });
                if far {
                    chosen.push(cell);
                }
            }
            if chosen.len() < count {
                return Err(Error::Config(format!(
                    "cannot place {count} cells {min_distance} apart on a {rows}x{cols} lattice"
                )));
            }
            let mut mask = vec![false; j];
            chosen.into_iter().for_each(|c| mask[c] = true);
            mask
        }
    };
    if !mask.iter().any(|&m| m) {
        return Err(Error::Config("pattern has no active cells".into()));
    }
    Ok(mask)
}

/// `b*` on the mask, zero elsewhere.
pub fn planted_beta(mask: &[bool], b_star: f64) -> Vec<f64> {
    mask.iter().map(|&m| if m { b_star } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    pub w_train: DMatrix<f64>,
    pub w_test: DMatrix<f64>,
    pub x_train: DMatrix<f64>,
    pub x_test: DMatrix<f64>,
}

/// Draws `W` iid standard normal and the rows of `X` from the CAR field at
/// `rho_x`, standardizes `X` with training moments and rescales by the root
/// training size.
pub fn gen_covariates<R: Rng + ?Sized>(
    config: &SimConfig,
    graph: &LatticeGraph,
    rng: &mut R,
) -> Result<Covariates> {
    let (n, k, j) = (config.n_train + config.n_test, config.alpha_star.len(), graph.len());
    let w = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sampler = CarField::new(graph, config.rho_x)?.sampler()?;
    let mut x = DMatrix::zeros(n, j);
    for i in 0..n {
        let row = sampler.sample(rng);
        for (c, v) in row.into_iter().enumerate() {
            x[(i, c)] = v;
        }
    }
    let mut x_train = x.rows(0, config.n_train).into_owned();
    let mut x_test = x.rows(config.n_train, config.n_test).into_owned();
    let moments = ColumnMoments::fit(&x_train);
    moments.apply(&mut x_train);
    moments.apply(&mut x_test);
    if config.n_train > 0 {
        let root = (config.n_train as f64).sqrt();
        let factor = match config.scale_mode {
            ScaleMode::Divide => 1.0 / root,
            ScaleMode::Multiply => root,
        };
        x_train *= factor;
        x_test *= factor;
    }
    Ok(Covariates {
        w_train: w.rows(0, config.n_train).into_owned(),
        w_test: w.rows(config.n_train, config.n_test).into_owned(),
        x_train,
        x_test,
    })
}

/// Poisson counts with log-mean `W alpha + X beta`.
pub fn gen_response<R: Rng + ?Sized>(
    w: &DMatrix<f64>,
    x: &DMatrix<f64>,
    alpha: &[f64],
    beta: &[f64],
    rng: &mut R,
) -> Result<Vec<u64>> {
    if w.ncols() != alpha.len() || x.ncols() != beta.len() || w.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "W is {}x{}, X is {}x{}, alpha has {}, beta has {}",
            w.nrows(),
            w.ncols(),
            x.nrows(),
            x.ncols(),
            alpha.len(),
            beta.len()
        )));
    }
    (0..w.nrows())
        .map(|i| {
            let eta: f64 = w.row(i).iter().zip(alpha).map(|(a, b)| a * b).sum::<f64>()
                + x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            if !(eta.abs() <= MAX_SIM_ETA) {
                return Err(Error::Overflow { row: i, eta });
            }
            let draw: f64 = Poisson::new(eta.exp())
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .sample(rng);
            Ok(draw as u64)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub beta_star: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub active_mask: Vec<bool>,
    pub graph: Arc<LatticeGraph>,
}

/// Generates one full scenario from `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<SimDataset> {
    config.validate()?;
    let graph = Arc::new(config.graph()?);
    let mask = gen_pattern(&config.pattern, config.rows, config.cols)?;
    let beta_star = planted_beta(&mask, config.b_star);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let cov = gen_covariates(config, &graph, &mut rng)?;
    let y_train = gen_response(&cov.w_train, &cov.x_train, &config.alpha_star, &beta_star, &mut rng)?;
    let y_test = gen_response(&cov.w_test, &cov.x_test, &config.alpha_star, &beta_star, &mut rng)?;
    Ok(SimDataset {
        train: Dataset::new(y_train, cov.w_train, cov.x_train)?.mark_standardized(),
        test: Dataset::new(y_test, cov.w_test, cov.x_test)?.mark_standardized(),
        beta_star,
        alpha_star: config.alpha_star.clone(),
        active_mask: mask,
        graph,
    })
}
