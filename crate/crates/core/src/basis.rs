//! Tensor-product B-spline expansion of a spatial coefficient field.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LatticeGraph;

/// Slack allowed when testing whether a coordinate lies inside the hull.
const HULL_TOL: f64 = 1e-12;

/// One axis of a clamped B-spline basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineAxis {
    breakpoints: Vec<f64>,
    degree: usize,
    knots: Vec<f64>,
}

impl BSplineAxis {
    pub fn new(breakpoints: Vec<f64>, degree: usize) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidArgument("need at least two breakpoints".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("breakpoints must be strictly increasing".into()));
        }
        let (first, last) = (breakpoints[0], *breakpoints.last().unwrap());
        let mut knots = vec![first; degree];
        knots.extend_from_slice(&breakpoints);
        knots.extend(std::iter::repeat_n(last, degree));
        Ok(Self {
            breakpoints,
            degree,
            knots,
        })
    }

    /// `count` equally spaced breakpoints over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, count: usize, degree: usize) -> Result<Self> {
        if count < 2 || !(hi > lo) {
            return Err(Error::InvalidArgument(format!(
                "cannot place {count} breakpoints on [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut b: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
        b[count - 1] = hi;
        Self::new(b, degree)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions: `breakpoints - 1 + degree`.
    pub fn len(&self) -> usize {
        self.breakpoints.len() - 1 + self.degree
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.breakpoints[0] - HULL_TOL && t <= self.breakpoints[self.breakpoints.len() - 1] + HULL_TOL
    }

    /// Values of every basis function at `t` (Cox-de Boor recursion).
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if !self.contains(t) {
            return Err(Error::OutsideHull {
                index: 0,
                x: t,
                y: f64::NAN,
            });
        }
        let b = &self.breakpoints;
        let t = t.clamp(b[0], b[b.len() - 1]);
        let p = self.degree;
        let u = &self.knots;
        // Knot span: largest i with u[i] <= t < u[i+1], last span closed on the right.
        let intervals = b.len() - 1;
        let seg = match b.partition_point(|&v| v <= t) {
            0 => 0,
            i => (i - 1).min(intervals - 1),
        };
        let span = seg + p;
        // Non-zero functions N_{span-p..=span} via the triangular scheme.
        let mut n = vec![0.0; p + 1];
        n[0] = 1.0;
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        for d in 1..=p {
            left[d] = t - u[span + 1 - d];
            right[d] = u[span + d] - t;
            let mut saved = 0.0;
            for r in 0..d {
                let denom = right[r + 1] + left[d - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[d - r] * temp;
            }
            n[d] = saved;
        }
        let mut out = vec![0.0; self.len()];
        out[span - p..=span].copy_from_slice(&n);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    pub nodes_lon: usize,
    pub nodes_lat: usize,
    pub lon_range: (f64, f64),
    pub lat_range: (f64, f64),
    pub degree: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            nodes_lon: 17,
            nodes_lat: 12,
            lon_range: (0.0, 1.0),
            lat_range: (0.0, 1.0),
            degree: 3,
        }
    }
}

/// Tensor product of a longitude and a latitude axis. Column `a * L_lat + b`
/// holds `B_a(lon) * B_b(lat)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorProductBasis {
    pub lon: BSplineAxis,
    pub lat: BSplineAxis,
}

impl TensorProductBasis {
    pub fn new(lon: BSplineAxis, lat: BSplineAxis) -> Self {
        Self { lon, lat }
    }

    pub fn from_config(c: &BasisConfig) -> Result<Self> {
        Ok(Self::new(
            BSplineAxis::uniform(c.lon_range.0, c.lon_range.1, c.nodes_lon, c.degree)?,
            BSplineAxis::uniform(c.lat_range.0, c.lat_range.1, c.nodes_lat, c.degree)?,
        ))
    }

    pub fn len(&self) -> usize {
        self.lon.len() * self.lat.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn column_index(&self, a: usize, b: usize) -> usize {
        a * self.lat.len() + b
    }

    /// 4-neighbour lattice over the `L_lon x L_lat` coefficient grid.
    pub fn coefficient_graph(&self) -> Result<LatticeGraph> {
        LatticeGraph::lattice(self.lon.len(), self.lat.len())
    }

    pub fn eval(&self, lon: f64, lat: f64) -> Result<Vec<f64>> {
        let bl = self.lon.eval(lon)?;
        let bt = self.lat.eval(lat)?;
        Ok(bl
            .iter()
            .flat_map(|a| bt.iter().map(move |b| a * b))
            .collect())
    }
}

/// `J x L` basis matrix for the given `(lon, lat)` locations.
pub fn tensor_basis_matrix(locations: &[(f64, f64)], basis: &TensorProductBasis) -> Result<DMatrix<f64>> {
    let l = basis.len();
    let mut m = DMatrix::zeros(locations.len(), l);
    for (j, &(x, y)) in locations.iter().enumerate() {
        if !basis.lon.contains(x) || !basis.lat.contains(y) {
            return Err(Error::OutsideHull { index: j, x, y });
        }
        let row = basis.eval(x, y)?;
        for (c, v) in row.into_iter().enumerate() {
            m[(j, c)] = v;
        }
    }
    Ok(m)
}

/// `X M`, the design for the basis coefficients.
pub fn expand_design(x: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != m.nrows() {
        return Err(Error::Dimension(format!(
            "X has {} columns, basis matrix has {} rows",
            x.ncols(),
            m.nrows()
        )));
    }
    Ok(x * m)
}
