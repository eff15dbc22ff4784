//! K-fold cross-validation over λ and kernel bandwidths.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gram::GramStructure;
use super::solve::{self, SolverKind, SpectralFactor};
use super::{model_from_solution, predict_many, FitConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernels::{DiscreteKernel, FunctionalKernel, KernelConfig, ResponseKernel};
use crate::sample::TrainingSet;

/// Candidate values. An empty bandwidth list keeps the base kernel's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub sigma_d: Vec<f64>,
    #[serde(default)]
    pub sigma_c: Vec<f64>,
    #[serde(default)]
    pub sigma_y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub fold: usize,
    pub lambda: f64,
    pub sigma_d: f64,
    pub sigma_c: Option<f64>,
    pub sigma_y: f64,
    /// Mean integrated squared error over the fold's held-out samples.
    pub ise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub config: FitConfig,
    /// Mean over folds of the per-fold mean ISE.
    pub mean_ise: f64,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub best: FitConfig,
    pub best_index: usize,
    /// One entry per candidate, in enumeration order (λ outermost, then
    /// `sigma_d`, `sigma_c`, `sigma_y`).
    pub scores: Vec<CvScore>,
    /// Candidate-major, fold-minor.
    pub rows: Vec<CvRow>,
    /// Held-out indices per fold.
    pub folds: Vec<Vec<usize>>,
}

pub fn cross_validate(
    ts: &TrainingSet,
    base: &FitConfig,
    grid: &CvGrid,
    folds: usize,
    seed: u64,
) -> Result<CvOutcome> {
    cross_validate_with(ts, base, grid, folds, seed, Execution::default())
}

/// Deterministic fold assignment: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (pos, idx) in order.into_iter().enumerate() {
        out[pos % folds].push(idx);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

fn kernel_variants(base: &KernelConfig, grid: &CvGrid) -> Result<Vec<KernelConfig>> {
    let or_base = |list: &[f64], value: f64| {
        if list.is_empty() {
            vec![value]
        } else {
            list.to_vec()
        }
    };
    let sigma_c: Vec<Option<f64>> = match base.functional {
        FunctionalKernel::Linear if !grid.sigma_c.is_empty() => {
            return Err(Error::InvalidConfig(
                "sigma_c grid given but the functional kernel is linear".into(),
            ))
        }
        FunctionalKernel::Linear => vec![None],
        FunctionalKernel::Gaussian { sigma } => or_base(&grid.sigma_c, sigma).into_iter().map(Some).collect(),
    };
    let mut out = Vec::new();
    for sd in or_base(&grid.sigma_d, base.sigma_d()) {
        for sc in &sigma_c {
            for sy in or_base(&grid.sigma_y, base.sigma_y()) {
                let k = KernelConfig {
                    discrete: DiscreteKernel::Gaussian { sigma: sd },
                    functional: match sc {
                        None => FunctionalKernel::Linear,
                        Some(s) => FunctionalKernel::Gaussian { sigma: *s },
                    },
                    response: ResponseKernel::Gaussian { sigma: sy },
                    ..*base
                };
                k.validate()?;
                out.push(k);
            }
        }
    }
    Ok(out)
}

pub fn cross_validate_with(
    ts: &TrainingSet,
    base: &FitConfig,
    grid: &CvGrid,
    folds: usize,
    seed: u64,
    exec: Execution,
) -> Result<CvOutcome> {
    if grid.lambdas.is_empty() {
        return Err(Error::InvalidConfig("lambda grid is empty".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    if folds > ts.n() {
        return Err(Error::InvalidConfig(format!(
            "{folds} folds requested for {} samples",
            ts.n()
        )));
    }
    for &lambda in &grid.lambdas {
        FitConfig { lambda, ..*base }.validate()?;
    }
    let kernels = kernel_variants(&base.kernel, grid)?;
    let fold_sets = fold_assignment(ts.n(), folds, seed);

    // one job per (kernel, fold); each returns the held-out ISE for every λ
    let jobs = kernels.len() * folds;
    let results = exec.map(jobs, |job| {
        let kernel = &kernels[job / folds];
        let held = &fold_sets[job % folds];
        let train: Vec<usize> = (0..ts.n()).filter(|i| held.binary_search(i).is_err()).collect();
        fold_errors(ts, base, kernel, &train, held, &grid.lambdas)
    });
    let mut per_job = Vec::with_capacity(jobs);
    for r in results {
        per_job.push(r?);
    }

    let mut scores = Vec::new();
    let mut rows = Vec::new();
    for (li, &lambda) in grid.lambdas.iter().enumerate() {
        for (ki, kernel) in kernels.iter().enumerate() {
            let mut total = 0.0;
            for f in 0..folds {
                let ise = per_job[ki * folds + f][li];
                total += ise;
                rows.push(CvRow {
                    fold: f,
                    lambda,
                    sigma_d: kernel.sigma_d(),
                    sigma_c: kernel.sigma_c(),
                    sigma_y: kernel.sigma_y(),
                    ise,
                });
            }
            scores.push(CvScore {
                config: FitConfig {
                    lambda,
                    kernel: *kernel,
                    ..*base
                },
                mean_ise: total / folds as f64,
            });
        }
    }

    let key = |s: &CvScore| {
        (
            s.config.lambda,
            s.config.kernel.sigma_d(),
            s.config.kernel.sigma_c().unwrap_or(0.0),
            s.config.kernel.sigma_y(),
        )
    };
    let mut best_index = 0;
    for (idx, s) in scores.iter().enumerate().skip(1) {
        let b = &scores[best_index];
        let better = s.mean_ise < b.mean_ise
            || (s.mean_ise == b.mean_ise && key(s).partial_cmp(&key(b)) == Some(std::cmp::Ordering::Less));
        if better {
            best_index = idx;
        }
    }
    if !scores[best_index].mean_ise.is_finite() {
        return Err(Error::Numerical {
            message: "no candidate produced a finite cross-validation score".into(),
            min_eigenvalue: None,
        });
    }
    Ok(CvOutcome {
        best: scores[best_index].config,
        best_index,
        scores,
        rows,
        folds: fold_sets,
    })
}

fn fold_errors(
    ts: &TrainingSet,
    base: &FitConfig,
    kernel: &KernelConfig,
    train: &[usize],
    held: &[usize],
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    let train_set = ts.subset(train)?;
    let gram = GramStructure::build(&train_set, kernel, Execution::Sequential)?;
    let y = train_set.response_matrix();
    let factor = match base.solver {
        SolverKind::Spectral => Some(SpectralFactor::new(&gram)?),
        _ => None,
    };
    let held_samples: Vec<_> = held.iter().map(|&i| ts.samples()[i].clone()).collect();
    let weights = ts.t_grid().weights();

    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = FitConfig {
                lambda,
                kernel: *kernel,
                ..*base
            };
            let started = Instant::now();
            let solution = match &factor {
                Some(f) => {
                    let alpha: DMatrix<f64> = f.solve(&y, lambda + base.jitter)?;
                    let diag = solve::SolveDiagnostics {
                        solver: "spectral".into(),
                        residual_norm: f64::NAN,
                        relative_residual: f64::NAN,
                        iterations: 0,
                        jitter: base.jitter,
                    };
                    solve::Solution { alpha, diagnostics: diag }
                }
                None => solve::solve(&gram, lambda, &y, base.solver, base.jitter, Execution::Sequential)?,
            };
            let model = model_from_solution(&train_set, &cfg, solution.alpha, solution.diagnostics, started);
            let preds = predict_many(&model, &held_samples, Execution::Sequential)?;
            let total: f64 = preds
                .iter()
                .zip(&held_samples)
                .map(|(p, s)| {
                    let y = s.y.as_ref().expect("training samples carry responses");
                    p.values()
                        .iter()
                        .zip(y.values())
                        .zip(weights)
                        .map(|((a, b), w)| w * (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum();
            Ok(total / held_samples.len() as f64)
        })
        .collect()
}
