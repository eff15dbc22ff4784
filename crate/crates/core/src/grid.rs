//! Sampling grids, sampled curves, and the trapezoidal L2 geometry every
//! integral in the crate is computed with.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing sample points of an interval together with their
/// trapezoidal quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Trapezoidal weights for a strictly increasing point set.
///
/// The endpoints carry half their adjacent spacing and interior points half
/// the distance between their neighbours, so the weights sum to the span.
pub fn trapezoid_weights(points: &[f64]) -> Result<Vec<f64>> {
    if points.len() < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some(bad) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidGrid(format!("point {bad} is not finite")));
    }
    if let Some(l) = points.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "points not strictly increasing at index {} ({} -> {})",
            l + 1,
            points[l],
            points[l + 1]
        )));
    }
    let m = points.len();
    let mut weights = Vec::with_capacity(m);
    weights.push((points[1] - points[0]) / 2.0);
    for l in 1..m - 1 {
        weights.push((points[l + 1] - points[l - 1]) / 2.0);
    }
    weights.push((points[m - 1] - points[m - 2]) / 2.0);
    Ok(weights)
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        let weights = trapezoid_weights(&points)?;
        Ok(Self { points, weights })
    }

    /// `count` equally spaced points from `start` to `end` inclusive.
    pub fn uniform(start: f64, end: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {count}"
            )));
        }
        let step = (end - start) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|l| start + step * l as f64).collect();
        // pin the right endpoint against accumulated rounding
        points[count - 1] = end;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn span(&self) -> f64 {
        self.end() - self.start()
    }

    /// Index of the first coordinate where the two grids differ, if any.
    /// A length mismatch reports the shorter length.
    pub fn first_difference(&self, other: &Grid) -> Option<usize> {
        if let Some(l) = self
            .points
            .iter()
            .zip(&other.points)
            .position(|(a, b)| a != b)
        {
            return Some(l);
        }
        (self.len() != other.len()).then(|| self.len().min(other.len()))
    }
}

impl From<Grid> for Vec<f64> {
    fn from(grid: Grid) -> Self {
        grid.points
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Grid::new(points)
    }
}

/// Real values sampled on a shared [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "curve has {} values but its grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(l) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite curve value {} at s = {}",
                values[l],
                grid.points()[l]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&s| f(s)).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn shares_grid(&self, other: &Curve) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    /// Piecewise-linear value at `t`, which must lie inside the grid interval.
    pub fn interpolate(&self, t: f64) -> Result<f64> {
        let pts = self.grid.points();
        if !(t >= self.grid.start() && t <= self.grid.end()) {
            return Err(Error::UnsupportedEvaluation(format!(
                "t = {t} outside [{}, {}]",
                self.grid.start(),
                self.grid.end()
            )));
        }
        let hi = pts.partition_point(|&p| p < t);
        if pts[hi] == t {
            return Ok(self.values[hi]);
        }
        let lo = hi - 1;
        let frac = (t - pts[lo]) / (pts[hi] - pts[lo]);
        Ok(self.values[lo] + frac * (self.values[hi] - self.values[lo]))
    }

    /// Quadrature approximation of the integral over the grid's interval.
    pub fn integrate(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

fn check_same_grid(a: &Curve, b: &Curve) -> Result<()> {
    if a.shares_grid(b) {
        return Ok(());
    }
    let detail = match a.grid.first_difference(&b.grid) {
        Some(l) if l < a.grid.len() && l < b.grid.len() => format!(
            "first differing coordinate at index {l}: {} vs {}",
            a.grid.points()[l],
            b.grid.points()[l]
        ),
        _ => format!("{} vs {} points", a.grid.len(), b.grid.len()),
    };
    Err(Error::IncompatibleGrids(detail))
}

pub fn integrate(c: &Curve) -> f64 {
    c.integrate()
}

/// Weighted L2 inner product of two curves on the same grid.
pub fn l2_inner(a: &Curve, b: &Curve) -> Result<f64> {
    check_same_grid(a, b)?;
    Ok(a.grid
        .weights()
        .iter()
        .zip(a.values.iter().zip(&b.values))
        .map(|(w, (x, y))| w * (x * y))
        .sum())
}

/// Squared L2 distance, computed from the pointwise difference so that the
/// result is never negative.
pub fn l2_distance_sq(a: &Curve, b: &Curve) -> Result<f64> {
    check_same_grid(a, b)?;
    Ok(a.grid
        .weights()
        .iter()
        .zip(a.values.iter().zip(&b.values))
        .map(|(w, (x, y))| {
            let d = x - y;
            w * d * d
        })
        .sum())
}
