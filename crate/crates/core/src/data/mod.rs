//! Dataset files, synthetic data, metrics and model persistence.

mod csv_io;
mod metrics;
mod model_file;
mod synth;

pub use csv_io::{
    format_number, load_dataset, load_prediction_set, read_responses, write_covariates, write_discrete,
    write_responses, Dataset, DatasetBundle, COVARIATE_HEADER, RESPONSE_HEADER,
};
pub use metrics::{evaluate, Metrics};
pub use model_file::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};
pub use synth::{
    generate_synthetic, CategoricalEffect, CategoryLevel, CovariateSpec, CurveSpec, GridSpec, SurfaceSpec,
    SyntheticConfig, SyntheticData,
};

use crate::error::Result;
use crate::grid::Curve;
use crate::sample::TrainingSet;

/// Subtracts the pointwise mean response curve. Returns the centered set and
/// the mean, which a fitted model adds back via
/// [`FittedModel::with_response_offset`](crate::estimator::FittedModel::with_response_offset).
pub fn center_responses(ts: &TrainingSet) -> Result<(TrainingSet, Vec<f64>)> {
    let y = ts.response_matrix();
    let n = ts.n() as f64;
    let mean: Vec<f64> = (0..ts.m()).map(|l| y.column(l).sum() / n).collect();
    let centered = (0..ts.n())
        .map(|i| {
            Curve::new(
                ts.t_grid().clone(),
                (0..ts.m()).map(|l| y[(i, l)] - mean[l]).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ts.with_responses(centered)?, mean))
}
