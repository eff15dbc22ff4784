//! Integrated squared error between predicted and reference curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Curve, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    /// `ISE_i = Σ_l w_l (ŷ_i(t_l) − y_i(t_l))²`.
    pub per_sample_ise: Vec<f64>,
    pub mean_ise: f64,
    pub root_mean_ise: f64,
    /// Mean squared error at each grid point, across samples.
    pub per_t_mse: Vec<f64>,
}

pub fn evaluate(pred: &[Curve], truth: &[Curve], t_grid: &Grid) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predicted curves for {} reference curves",
            pred.len(),
            truth.len()
        )));
    }
    for (i, c) in pred.iter().chain(truth).enumerate() {
        if c.grid().as_ref() != t_grid {
            return Err(Error::IncompatibleGrids(format!(
                "curve {} is not on the evaluation t-grid",
                i % pred.len().max(1)
            )));
        }
    }
    let w = t_grid.weights();
    let m = t_grid.len();
    let mut per_t = vec![0.0; m];
    let per_sample: Vec<f64> = pred
        .iter()
        .zip(truth)
        .map(|(p, y)| {
            let mut ise = 0.0;
            for l in 0..m {
                let d = p.values()[l] - y.values()[l];
                ise += w[l] * d * d;
                per_t[l] += d * d;
            }
            ise
        })
        .collect();
    let count = pred.len();
    let mean_ise = if count == 0 { 0.0 } else { per_sample.iter().sum::<f64>() / count as f64 };
    if count > 0 {
        for v in &mut per_t {
            *v /= count as f64;
        }
    }
    Ok(Metrics {
        count,
        per_sample_ise: per_sample,
        mean_ise,
        root_mean_ise: mean_ise.sqrt(),
        per_t_mse: per_t,
    })
}
