//! Observations: discrete covariates, functional covariates, and an optional
//! response curve, plus the validated training set built from them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Curve, Grid};

/// One observation `x_i = (x_i^d, x_i^c)` and optionally its response `y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// Discrete covariates after one-hot encoding; empty when there are none.
    pub xd: Vec<f64>,
    /// One curve per functional covariate.
    pub xc: Vec<Curve>,
    pub y: Option<Curve>,
}

impl Sample {
    pub fn new(id: impl Into<String>, xd: Vec<f64>, xc: Vec<Curve>, y: Option<Curve>) -> Self {
        Self {
            id: id.into(),
            xd,
            xc,
            y,
        }
    }

    /// The covariates alone.
    pub fn without_response(&self) -> Sample {
        Sample {
            y: None,
            ..self.clone()
        }
    }
}

/// Names and encoding of covariate columns, carried alongside a training set
/// so predictions can be checked against what the model was fitted on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CovariateLayout {
    /// Functional covariate names, in the order of `Sample::xc`.
    pub variables: Vec<String>,
    pub discrete: DiscreteSchema,
}

/// Declared discrete columns and how each expands into `Sample::xd`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiscreteSchema {
    pub columns: Vec<DiscreteColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteColumn {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    /// One-hot encoded over `levels` (sorted).
    Categorical { levels: Vec<String> },
}

impl DiscreteSchema {
    /// Width of the encoded vector.
    pub fn width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Numeric => 1,
                ColumnKind::Categorical { levels } => levels.len(),
            })
            .sum()
    }

    /// Encodes one row of raw cells (in column order).
    pub fn encode(&self, sample_id: &str, cells: &[&str]) -> Result<Vec<f64>> {
        if cells.len() != self.columns.len() {
            return Err(Error::Dimension(format!(
                "sample {sample_id}: expected {} discrete values, got {}",
                self.columns.len(),
                cells.len()
            )));
        }
        let mut out = Vec::with_capacity(self.width());
        for (col, cell) in self.columns.iter().zip(cells) {
            match &col.kind {
                ColumnKind::Numeric => {
                    let v: f64 = cell.trim().parse().map_err(|_| {
                        Error::Data(format!(
                            "sample {sample_id}: column {} value {cell:?} is not numeric",
                            col.name
                        ))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Data(format!(
                            "sample {sample_id}: column {} value is not finite",
                            col.name
                        )));
                    }
                    out.push(v);
                }
                ColumnKind::Categorical { levels } => {
                    let hit = levels.iter().position(|l| l == cell.trim()).ok_or_else(|| {
                        Error::Data(format!(
                            "sample {sample_id}: column {} has unknown category {cell:?}",
                            col.name
                        ))
                    })?;
                    out.extend((0..levels.len()).map(|l| if l == hit { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(out)
    }
}

/// `n` fully observed samples sharing `k`, `p`, the per-variable s-grids and
/// the response t-grid.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    samples: Vec<Sample>,
    s_grids: Vec<Arc<Grid>>,
    t_grid: Arc<Grid>,
    layout: CovariateLayout,
}

impl TrainingSet {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Integrity("training set has no samples".into()))?;
        let s_grids: Vec<Arc<Grid>> = first.xc.iter().map(|c| c.grid().clone()).collect();
        let t_grid = first
            .y
            .as_ref()
            .ok_or_else(|| Error::Data(format!("sample {} has no response", first.id)))?
            .grid()
            .clone();
        let layout = CovariateLayout {
            variables: (0..s_grids.len()).map(|q| format!("x{}", q + 1)).collect(),
            discrete: DiscreteSchema {
                columns: (0..first.xd.len())
                    .map(|c| DiscreteColumn {
                        name: format!("d{}", c + 1),
                        kind: ColumnKind::Numeric,
                    })
                    .collect(),
            },
        };
        let ts = Self {
            samples,
            s_grids,
            t_grid,
            layout,
        };
        for s in &ts.samples {
            ts.check_covariates(s)?;
            let y = s
                .y
                .as_ref()
                .ok_or_else(|| Error::Data(format!("sample {} has no response", s.id)))?;
            if *y.grid().as_ref() != *ts.t_grid {
                return Err(Error::IncompatibleGrids(format!(
                    "sample {}: response grid differs from the common t-grid",
                    s.id
                )));
            }
        }
        Ok(ts)
    }

    /// Attaches covariate names and the discrete encoding.
    pub fn with_layout(mut self, layout: CovariateLayout) -> Result<Self> {
        if layout.variables.len() != self.p() || layout.discrete.width() != self.k() {
            return Err(Error::Dimension(format!(
                "layout describes p={}, k={} but samples have p={}, k={}",
                layout.variables.len(),
                layout.discrete.width(),
                self.p(),
                self.k()
            )));
        }
        self.layout = layout;
        Ok(self)
    }

    /// Verifies that `x` has the same shape and grids as the training samples.
    pub fn check_covariates(&self, x: &Sample) -> Result<()> {
        check_covariates(&self.s_grids, self.k(), &self.layout.variables, x)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn s_grids(&self) -> &[Arc<Grid>] {
        &self.s_grids
    }

    pub fn t_grid(&self) -> &Arc<Grid> {
        &self.t_grid
    }

    pub fn layout(&self) -> &CovariateLayout {
        &self.layout
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn m(&self) -> usize {
        self.t_grid.len()
    }

    pub fn p(&self) -> usize {
        self.s_grids.len()
    }

    pub fn k(&self) -> usize {
        self.samples[0].xd.len()
    }

    /// Response values as an `n × m` matrix, row `i` being `y_i` on the t-grid.
    pub fn response_matrix(&self) -> nalgebra::DMatrix<f64> {
        let m = self.m();
        nalgebra::DMatrix::from_fn(self.n(), m, |i, l| {
            self.samples[i].y.as_ref().expect("validated")
                .values()[l]
        })
    }

    /// The subset at `indices`, keeping layout and grids.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Integrity("training subset is empty".into()));
        }
        Ok(Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            s_grids: self.s_grids.clone(),
            t_grid: self.t_grid.clone(),
            layout: self.layout.clone(),
        })
    }

    /// Replaces every response, keeping covariates.
    pub fn with_responses(&self, responses: Vec<Curve>) -> Result<Self> {
        if responses.len() != self.n() {
            return Err(Error::Dimension(format!(
                "{} responses for {} samples",
                responses.len(),
                self.n()
            )));
        }
        let samples = self
            .samples
            .iter()
            .zip(responses)
            .map(|(s, y)| Sample {
                y: Some(y),
                ..s.clone()
            })
            .collect();
        Self::new(samples)?.with_layout(self.layout.clone())
    }
}

pub(crate) fn check_covariates(
    s_grids: &[Arc<Grid>],
    k: usize,
    variables: &[String],
    x: &Sample,
) -> Result<()> {
    if x.xd.len() != k {
        return Err(Error::Dimension(format!(
            "sample {}: {} discrete covariates, expected {k}",
            x.id,
            x.xd.len()
        )));
    }
    if let Some(v) = x.xd.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "sample {}: discrete covariate {v} is not finite",
            x.id
        )));
    }
    if x.xc.len() != s_grids.len() {
        return Err(Error::Dimension(format!(
            "sample {}: {} functional covariates, expected {}",
            x.id,
            x.xc.len(),
            s_grids.len()
        )));
    }
    for (q, (c, g)) in x.xc.iter().zip(s_grids).enumerate() {
        if let Some(l) = c.grid().first_difference(g) {
            let name = variables.get(q).cloned().unwrap_or_else(|| format!("#{q}"));
            let coord = c
                .grid()
                .points()
                .get(l)
                .map(|v| v.to_string())
                .unwrap_or_else(|| "<missing>".into());
            return Err(Error::IncompatibleGrids(format!(
                "sample {}: variable {name} s-grid differs at index {l} (s = {coord})",
                x.id
            )));
        }
    }
    Ok(())
}
