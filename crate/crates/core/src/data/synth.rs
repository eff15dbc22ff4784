//! Seeded data from the multiple functional linear model
//!
//! ```text
//! y_i(t) = α(t) + Σ_k ∫ x_ik(s) β_k(s, t) ds + offset_{c_i}(t) + ε_i(t)
//! ```
//!
//! with smooth random Fourier covariates, categorical offsets, and iid
//! Gaussian noise at each grid point. The noiseless responses are returned
//! next to the noisy ones.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Curve, Grid};
use crate::sample::{ColumnKind, CovariateLayout, DiscreteColumn, DiscreteSchema, Sample, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        if !(self.end > self.start) {
            return Err(Error::InvalidGrid(format!(
                "interval [{}, {}] is empty",
                self.start, self.end
            )));
        }
        Grid::uniform(self.start, self.end, self.points)
    }
}

/// A function of one variable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CurveSpec {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `Σ_d c_d u^d`.
    Polynomial { coefficients: Vec<f64> },
    GaussianBump { center: f64, scale: f64, amplitude: f64 },
}

impl CurveSpec {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            CurveSpec::Zero => 0.0,
            CurveSpec::Constant { value } => *value,
            CurveSpec::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * u + c),
            CurveSpec::GaussianBump { center, scale, amplitude } => {
                let d = u - center;
                amplitude * (-d * d / (2.0 * scale * scale)).exp()
            }
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            CurveSpec::Zero => true,
            CurveSpec::Constant { value } => value.is_finite(),
            CurveSpec::Polynomial { coefficients } => finite(coefficients),
            CurveSpec::GaussianBump { center, scale, amplitude } => {
                finite(&[*center, *amplitude]) && scale.is_finite() && *scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid {what} curve spec {self:?}")))
        }
    }
}

/// A regression surface `β(s, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SurfaceSpec {
    Zero,
    GaussianBump {
        center_s: f64,
        center_t: f64,
        scale: f64,
        amplitude: f64,
    },
    /// Degree ≤ 2 with coefficients ordered `[1, s, t, s², s·t, t²]`; missing
    /// trailing coefficients are zero.
    Polynomial { coefficients: Vec<f64> },
}

impl SurfaceSpec {
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match self {
            SurfaceSpec::Zero => 0.0,
            SurfaceSpec::GaussianBump {
                center_s,
                center_t,
                scale,
                amplitude,
            } => {
                let d = (s - center_s).powi(2) + (t - center_t).powi(2);
                amplitude * (-d / (2.0 * scale * scale)).exp()
            }
            SurfaceSpec::Polynomial { coefficients } => {
                let basis = [1.0, s, t, s * s, s * t, t * t];
                coefficients.iter().zip(basis).map(|(c, b)| c * b).sum()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SurfaceSpec::Zero => Ok(()),
            SurfaceSpec::GaussianBump {
                center_s,
                center_t,
                scale,
                amplitude,
            } => {
                if [center_s, center_t, amplitude].iter().all(|v| v.is_finite()) && scale.is_finite() && *scale > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "gaussian bump surface needs finite centers/amplitude and positive scale, got {self:?}"
                    )))
                }
            }
            SurfaceSpec::Polynomial { coefficients } => {
                if coefficients.len() > 6 {
                    Err(Error::InvalidConfig(format!(
                        "polynomial surface has degree ≤ 2 (at most 6 coefficients), got {}",
                        coefficients.len()
                    )))
                } else if coefficients.iter().any(|c| !c.is_finite()) {
                    Err(Error::InvalidConfig("polynomial surface coefficient is not finite".into()))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// How each functional covariate curve is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovariateSpec {
    /// `c_0 + Σ_h a_h sin(2πhu) + b_h cos(2πhu)` on the rescaled interval
    /// `u ∈ [0, 1]`, with `c_0 ~ N(0, σ²)` and `a_h, b_h ~ N(0, (σ/h)²)`.
    Fourier { harmonics: usize, coef_sigma: f64 },
    /// The same curve for every sample (evaluated at `s` itself).
    Fixed { curve: CurveSpec },
}

impl Default for CovariateSpec {
    fn default() -> Self {
        CovariateSpec::Fourier {
            harmonics: 3,
            coef_sigma: 1.0,
        }
    }
}

/// A categorical covariate whose level adds an offset curve to the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEffect {
    pub column: String,
    pub levels: Vec<CategoryLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryLevel {
    pub label: String,
    #[serde(default)]
    pub offset: CurveSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub s_grid: GridSpec,
    pub t_grid: GridSpec,
    #[serde(default)]
    pub intercept: CurveSpec,
    /// One surface per functional covariate; `p` is its length.
    pub surfaces: Vec<SurfaceSpec>,
    #[serde(default)]
    pub covariates: CovariateSpec,
    #[serde(default)]
    pub categorical: Vec<CategoricalEffect>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn p(&self) -> usize {
        self.surfaces.len()
    }

    /// Width of the one-hot discrete vector.
    pub fn k(&self) -> usize {
        self.categorical.iter().map(|c| c.levels.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if self.surfaces.is_empty() {
            return Err(Error::InvalidConfig("at least one functional covariate surface is required".into()));
        }
        self.s_grid.build()?;
        self.t_grid.build()?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        self.intercept.validate("intercept")?;
        for s in &self.surfaces {
            s.validate()?;
        }
        match &self.covariates {
            CovariateSpec::Fourier { coef_sigma, .. } if !(coef_sigma.is_finite() && *coef_sigma >= 0.0) => {
                return Err(Error::InvalidConfig(format!("coef_sigma must be non-negative, got {coef_sigma}")));
            }
            CovariateSpec::Fixed { curve } => curve.validate("covariate")?,
            _ => {}
        }
        for c in &self.categorical {
            if c.levels.is_empty() {
                return Err(Error::InvalidConfig(format!("categorical column {} has no levels", c.column)));
            }
            let mut labels: Vec<&str> = c.levels.iter().map(|l| l.label.as_str()).collect();
            labels.sort_unstable();
            labels.dedup();
            if labels.len() != c.levels.len() {
                return Err(Error::InvalidConfig(format!("categorical column {} repeats a label", c.column)));
            }
            for l in &c.levels {
                l.offset.validate("category offset")?;
            }
        }
        Ok(())
    }
}

/// Generated data plus the ground truth needed to score estimates.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Noisy responses.
    pub training: TrainingSet,
    /// Noiseless responses, aligned with `training.samples()`.
    pub truth: Vec<Curve>,
    pub discrete_columns: Vec<String>,
    /// Raw category labels per sample, aligned with `discrete_columns`.
    pub discrete_labels: Vec<Vec<String>>,
}

impl SyntheticData {
    pub fn ids(&self) -> Vec<String> {
        self.training.samples().iter().map(|s| s.id.clone()).collect()
    }

    /// Splits into the first `n_first` samples and the rest.
    pub fn split(&self, n_first: usize) -> Result<(SyntheticData, SyntheticData)> {
        let n = self.training.n();
        if n_first == 0 || n_first >= n {
            return Err(Error::InvalidConfig(format!("cannot split {n} samples at {n_first}")));
        }
        let part = |range: std::ops::Range<usize>| -> Result<SyntheticData> {
            let idx: Vec<usize> = range.clone().collect();
            Ok(SyntheticData {
                training: self.training.subset(&idx)?,
                truth: self.truth[range.clone()].to_vec(),
                discrete_columns: self.discrete_columns.clone(),
                discrete_labels: self.discrete_labels[range].to_vec(),
            })
        };
        Ok((part(0..n_first)?, part(n_first..n)?))
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let s_grid = Arc::new(cfg.s_grid.build()?);
    let t_grid = Arc::new(cfg.t_grid.build()?);
    let (s_pts, t_pts) = (s_grid.points(), t_grid.points());
    let s_w = s_grid.weights();
    let span = s_grid.span();

    // β_k(s_j, t_l), precomputed
    let surfaces: Vec<Vec<Vec<f64>>> = cfg
        .surfaces
        .iter()
        .map(|b| t_pts.iter().map(|&t| s_pts.iter().map(|&s| b.eval(s, t)).collect()).collect())
        .collect();
    let intercept: Vec<f64> = t_pts.iter().map(|&t| cfg.intercept.eval(t)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let width = ((cfg.n.max(2) - 1) as f64).log10().floor() as usize + 1;

    let mut samples = Vec::with_capacity(cfg.n);
    let mut truth = Vec::with_capacity(cfg.n);
    let mut labels = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let xc: Vec<Curve> = (0..cfg.p())
            .map(|_| match &cfg.covariates {
                CovariateSpec::Fourier { harmonics, coef_sigma } => {
                    let c0 = coef_sigma * unit_normal.sample(&mut rng);
                    let coefs: Vec<(f64, f64)> = (1..=*harmonics)
                        .map(|h| {
                            let sd = coef_sigma / h as f64;
                            (sd * unit_normal.sample(&mut rng), sd * unit_normal.sample(&mut rng))
                        })
                        .collect();
                    Curve::from_fn(s_grid.clone(), |s| {
                        let u = (s - s_pts[0]) / span;
                        c0 + coefs
                            .iter()
                            .enumerate()
                            .map(|(h, (a, b))| {
                                let arg = std::f64::consts::TAU * (h + 1) as f64 * u;
                                a * arg.sin() + b * arg.cos()
                            })
                            .sum::<f64>()
                    })
                }
                CovariateSpec::Fixed { curve } => Curve::from_fn(s_grid.clone(), |s| curve.eval(s)),
            })
            .collect::<Result<_>>()?;

        let mut xd = Vec::with_capacity(cfg.k());
        let mut row_labels = Vec::with_capacity(cfg.categorical.len());
        let mut offsets: Vec<&CurveSpec> = Vec::new();
        for effect in &cfg.categorical {
            let pick = rng.random_range(0..effect.levels.len());
            // one-hot over labels sorted lexicographically, matching file ingestion
            let mut sorted: Vec<&str> = effect.levels.iter().map(|l| l.label.as_str()).collect();
            sorted.sort_unstable();
            let label = &effect.levels[pick].label;
            xd.extend(sorted.iter().map(|l| if *l == label { 1.0 } else { 0.0 }));
            row_labels.push(label.clone());
            offsets.push(&effect.levels[pick].offset);
        }

        let clean: Vec<f64> = (0..t_pts.len())
            .map(|l| {
                let mut v = intercept[l];
                for (x, beta) in xc.iter().zip(&surfaces) {
                    v += x.values().iter().zip(&beta[l]).zip(s_w).map(|((xv, b), w)| w * xv * b).sum::<f64>();
                }
                v + offsets.iter().map(|o| o.eval(t_pts[l])).sum::<f64>()
            })
            .collect();
        let noisy: Vec<f64> = clean
            .iter()
            .map(|v| v + cfg.noise_sigma * unit_normal.sample(&mut rng))
            .collect();

        samples.push(Sample::new(
            format!("s{i:0width$}"),
            xd,
            xc,
            Some(Curve::new(t_grid.clone(), noisy)?),
        ));
        truth.push(Curve::new(t_grid.clone(), clean)?);
        labels.push(row_labels);
    }

    let layout = CovariateLayout {
        variables: (1..=cfg.p()).map(|q| format!("x{q}")).collect(),
        discrete: DiscreteSchema {
            columns: cfg
                .categorical
                .iter()
                .map(|c| {
                    let mut levels: Vec<String> = c.levels.iter().map(|l| l.label.clone()).collect();
                    levels.sort_unstable();
                    DiscreteColumn {
                        name: c.column.clone(),
                        kind: ColumnKind::Categorical { levels },
                    }
                })
                .collect(),
        },
    };
    Ok(SyntheticData {
        training: TrainingSet::new(samples)?.with_layout(layout)?,
        truth,
        discrete_columns: cfg.categorical.iter().map(|c| c.column.clone()).collect(),
        discrete_labels: labels,
    })
}
