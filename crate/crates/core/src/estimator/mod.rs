//! Function-valued kernel ridge regression.
//!
//! The estimate is `f*(x) = Σ_j K(x, x_j) g_j`, with each `g_j` represented
//! by its values `α_jl = g_j(t_l)` on the response grid. The coefficients
//! solve `(K + λI) α = Y`, which is the stationarity condition of the
//! quadrature-discretized regularized risk computed by [`objective`].

mod cv;
mod gram;
mod solve;

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use cv::{cross_validate, cross_validate_with, CvGrid, CvOutcome, CvRow, CvScore};
pub use gram::{assemble_gram, assemble_gram_with, flatten, unflatten, GramStructure};
pub use solve::{SolveDiagnostics, SolverKind, SpectralFactor, CHOLESKY_MAX_UNKNOWNS};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{Curve, Grid};
use crate::kernels::{kappa, KernelConfig, OperatorKind};
use crate::sample::{check_covariates, CovariateLayout, Sample, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: f64,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub solver: SolverKind,
    /// Extra diagonal shift applied before factorization.
    #[serde(default)]
    pub jitter: f64,
}

impl FitConfig {
    pub fn new(lambda: f64, kernel: KernelConfig) -> Self {
        Self {
            lambda,
            kernel,
            solver: SolverKind::default(),
            jitter: 0.0,
        }
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "jitter must be non-negative, got {}",
                self.jitter
            )));
        }
        self.kernel.validate()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    #[serde(flatten)]
    pub solve: SolveDiagnostics,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub(crate) covariates: Vec<Sample>,
    pub(crate) alpha: DMatrix<f64>,
    pub(crate) t_grid: Arc<Grid>,
    pub(crate) s_grids: Vec<Arc<Grid>>,
    pub(crate) kernel: KernelConfig,
    pub(crate) lambda: f64,
    pub(crate) layout: CovariateLayout,
    pub(crate) response_offset: Option<Vec<f64>>,
    pub(crate) diagnostics: FitDiagnostics,
}

impl FittedModel {
    /// `n × m` coefficients, row `i` being `α_i` on the t-grid.
    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn covariates(&self) -> &[Sample] {
        &self.covariates
    }

    pub fn t_grid(&self) -> &Arc<Grid> {
        &self.t_grid
    }

    pub fn s_grids(&self) -> &[Arc<Grid>] {
        &self.s_grids
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn layout(&self) -> &CovariateLayout {
        &self.layout
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn n(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn m(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn k(&self) -> usize {
        self.covariates.first().map_or(0, |s| s.xd.len())
    }

    pub fn response_offset(&self) -> Option<&[f64]> {
        self.response_offset.as_deref()
    }

    /// Adds `offset` (a curve on the t-grid) to every prediction; used to undo
    /// response centering.
    pub fn with_response_offset(mut self, offset: Vec<f64>) -> Result<Self> {
        if offset.len() != self.m() {
            return Err(Error::Dimension(format!(
                "offset of length {} for a {}-point t-grid",
                offset.len(),
                self.m()
            )));
        }
        self.response_offset = Some(offset);
        Ok(self)
    }

    pub fn check_covariates(&self, x: &Sample) -> Result<()> {
        check_covariates(&self.s_grids, self.k(), &self.layout.variables, x)
    }
}

pub fn fit(ts: &TrainingSet, cfg: &FitConfig) -> Result<FittedModel> {
    fit_with(ts, cfg, Execution::default())
}

/// Fits the model; `exec` governs the Gram assembly only.
pub fn fit_with(ts: &TrainingSet, cfg: &FitConfig, exec: Execution) -> Result<FittedModel> {
    cfg.validate()?;
    let started = Instant::now();
    let gram = GramStructure::build(ts, &cfg.kernel, exec)?;
    let y = ts.response_matrix();
    let solution = solve::solve(&gram, cfg.lambda, &y, cfg.solver, cfg.jitter, exec)?;
    Ok(model_from_solution(ts, cfg, solution.alpha, solution.diagnostics, started))
}

pub(crate) fn model_from_solution(
    ts: &TrainingSet,
    cfg: &FitConfig,
    alpha: DMatrix<f64>,
    solve: SolveDiagnostics,
    started: Instant,
) -> FittedModel {
    FittedModel {
        covariates: ts.samples().iter().map(Sample::without_response).collect(),
        alpha,
        t_grid: ts.t_grid().clone(),
        s_grids: ts.s_grids().to_vec(),
        kernel: cfg.kernel,
        lambda: cfg.lambda,
        layout: ts.layout().clone(),
        response_offset: None,
        diagnostics: FitDiagnostics {
            solve,
            seconds: started.elapsed().as_secs_f64(),
        },
    }
}

/// Evaluates `f*(x)` on `eval_grid`.
///
/// With the integral operator the prediction
/// `ŷ(t) = Σ_l w_l k_y(t_l, t) Σ_j kappa(x, x_j) α_jl` is defined for any `t`
/// in the response interval. With the identity operator it exists only at
/// training grid points.
pub fn predict(model: &FittedModel, x: &Sample, eval_grid: &Grid) -> Result<Curve> {
    model.check_covariates(x)?;
    let t_grid = &model.t_grid;
    if eval_grid.start() < t_grid.start() || eval_grid.end() > t_grid.end() {
        return Err(Error::UnsupportedEvaluation(format!(
            "evaluation interval [{}, {}] leaves the response domain [{}, {}]",
            eval_grid.start(),
            eval_grid.end(),
            t_grid.start(),
            t_grid.end()
        )));
    }
    let m = model.m();
    let weights: Vec<f64> = model
        .covariates
        .iter()
        .map(|xj| kappa(x, xj, &model.kernel))
        .collect::<Result<_>>()?;
    // v_l = Σ_j kappa_j α_jl
    let mut mixed = vec![0.0; m];
    for (j, kj) in weights.iter().enumerate() {
        for (l, v) in mixed.iter_mut().enumerate() {
            *v += kj * model.alpha[(j, l)];
        }
    }

    let train_t = t_grid.points();
    let values: Vec<f64> = match model.kernel.operator {
        OperatorKind::Integral => {
            let w = t_grid.weights();
            let ky = model.kernel.response;
            eval_grid
                .points()
                .iter()
                .map(|&t| {
                    (0..m)
                        .map(|l| ky.eval(t, train_t[l]) * w[l] * mixed[l])
                        .sum::<f64>()
                })
                .collect()
        }
        OperatorKind::Identity => eval_grid
            .points()
            .iter()
            .map(|&t| {
                train_t
                    .iter()
                    .position(|&tl| tl == t)
                    .map(|l| mixed[l])
                    .ok_or_else(|| {
                        Error::UnsupportedEvaluation(format!(
                            "identity-operator predictions exist only on the training t-grid; t = {t} is off-grid"
                        ))
                    })
            })
            .collect::<Result<_>>()?,
    };

    let values = match &model.response_offset {
        None => values,
        Some(offset) => {
            let offset_curve = Curve::new(t_grid.clone(), offset.clone())?;
            values
                .into_iter()
                .zip(eval_grid.points())
                .map(|(v, &t)| Ok(v + offset_curve.interpolate(t)?))
                .collect::<Result<_>>()?
        }
    };
    Curve::new(Arc::new(eval_grid.clone()), values)
}

/// Predicts every sample on the model's own t-grid.
pub fn predict_many(model: &FittedModel, xs: &[Sample], exec: Execution) -> Result<Vec<Curve>> {
    let grid = model.t_grid.as_ref();
    exec.map(xs.len(), |i| predict(model, &xs[i], grid))
        .into_iter()
        .map(|c| {
            c.map(|c| {
                // share the model's grid allocation
                Curve::new(model.t_grid.clone(), c.into_values()).expect("same grid")
            })
        })
        .collect()
}

/// Discretized regularized risk
/// `Σ_i ‖y_i − Σ_j K_ij α_j‖²_W + λ Σ_{i,j} ⟨K_ij α_j, α_i⟩_W`.
pub fn objective(ts: &TrainingSet, kernel: &KernelConfig, lambda: f64, alpha: &DMatrix<f64>) -> Result<f64> {
    let gram = GramStructure::build(ts, kernel, Execution::Sequential)?;
    objective_with(&gram, &ts.response_matrix(), lambda, alpha)
}

pub fn objective_with(
    gram: &GramStructure,
    y: &DMatrix<f64>,
    lambda: f64,
    alpha: &DMatrix<f64>,
) -> Result<f64> {
    let (n, m) = (gram.n(), gram.m());
    if alpha.shape() != (n, m) || y.shape() != (n, m) {
        return Err(Error::Dimension(format!(
            "coefficients {:?} and responses {:?} for an {n}×{m} problem",
            alpha.shape(),
            y.shape()
        )));
    }
    let w = gram.response().weights();
    let k_alpha = gram.apply(alpha);
    let mut loss = 0.0;
    let mut penalty = 0.0;
    for i in 0..n {
        for l in 0..m {
            let r = y[(i, l)] - k_alpha[(i, l)];
            loss += w[l] * r * r;
            penalty += w[l] * k_alpha[(i, l)] * alpha[(i, l)];
        }
    }
    Ok(loss + lambda * penalty)
}

/// `K α` on the training inputs: the fitted response values.
pub fn fitted_values(ts: &TrainingSet, model: &FittedModel) -> Result<DMatrix<f64>> {
    let gram = GramStructure::build(ts, &model.kernel, Execution::Sequential)?;
    let mut out = gram.apply(&model.alpha);
    if let Some(offset) = &model.response_offset {
        for i in 0..out.nrows() {
            for l in 0..out.ncols() {
                out[(i, l)] += offset[l];
            }
        }
    }
    Ok(out)
}

/// `‖(K + λI)α − Y‖₂` for arbitrary coefficients.
pub fn system_residual(ts: &TrainingSet, kernel: &KernelConfig, lambda: f64, alpha: &DMatrix<f64>) -> Result<f64> {
    let gram = GramStructure::build(ts, kernel, Execution::Sequential)?;
    Ok(solve::residual(&gram, lambda, alpha, &ts.response_matrix()).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{DiscreteKernel, FunctionalKernel, ResponseKernel};

    fn grid(m: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(0.0, 1.0, m).unwrap())
    }

    fn tiny(operator: OperatorKind) -> (TrainingSet, KernelConfig) {
        let s = grid(9);
        let t = grid(5);
        let samples = (0..4)
            .map(|i| {
                let phase = i as f64 * 0.7;
                Sample::new(
                    format!("s{i}"),
                    vec![(i % 2) as f64],
                    vec![Curve::from_fn(s.clone(), |u| (3.0 * u + phase).sin()).unwrap()],
                    Some(Curve::from_fn(t.clone(), |u| (u * phase).cos() + 0.1 * i as f64).unwrap()),
                )
            })
            .collect();
        let kernel = KernelConfig {
            discrete: DiscreteKernel::Gaussian { sigma: 1.0 },
            functional: FunctionalKernel::Gaussian { sigma: 0.8 },
            response: ResponseKernel::Gaussian { sigma: 0.3 },
            operator,
            ..KernelConfig::default()
        };
        (TrainingSet::new(samples).unwrap(), kernel)
    }

    #[test]
    fn solvers_agree() {
        for op in [OperatorKind::Integral, OperatorKind::Identity] {
            let (ts, kernel) = tiny(op);
            let base = FitConfig::new(0.05, kernel);
            let chol = fit(&ts, &base).unwrap();
            let spec = fit(&ts, &base.with_solver(SolverKind::Spectral)).unwrap();
            let cg = fit(&ts, &base.with_solver(SolverKind::ConjugateGradient { tol: 1e-12, max_iter: 500 })).unwrap();
            let scale = chol.alpha().abs().max();
            assert!((chol.alpha() - spec.alpha()).abs().max() <= 1e-9 * scale);
            assert!((chol.alpha() - cg.alpha()).abs().max() <= 1e-8 * scale);
            let y_norm = ts.response_matrix().norm();
            assert!(chol.diagnostics().solve.residual_norm <= 1e-8 * y_norm);
            assert!(cg.diagnostics().solve.residual_norm <= 1e-12 * y_norm);
        }
    }

    #[test]
    fn identity_single_sample_closed_form() {
        let (ts, kernel) = tiny(OperatorKind::Identity);
        let ts = ts.subset(&[2]).unwrap();
        let lambda = 0.3;
        let model = fit(&ts, &FitConfig::new(lambda, kernel)).unwrap();
        let k11 = kappa(&ts.samples()[0], &ts.samples()[0], &kernel).unwrap();
        let y = ts.samples()[0].y.as_ref().unwrap().values();
        for l in 0..ts.m() {
            let want = y[l] / (k11 + lambda);
            assert!((model.alpha()[(0, l)] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn heavy_regularization_shrinks_to_zero() {
        let (ts, kernel) = tiny(OperatorKind::Integral);
        let model = fit(&ts, &FitConfig::new(1e6, kernel)).unwrap();
        let y = ts.response_matrix();
        assert!((model.alpha() - &y / 1e6).abs().max() < 1e-11);
        let preds = predict_many(&model, ts.samples(), Execution::Sequential).unwrap();
        for p in preds {
            assert!(p.values().iter().all(|v| v.abs() < 1e-5));
        }
    }

    #[test]
    fn prediction_matches_gram_product() {
        for op in [OperatorKind::Integral, OperatorKind::Identity] {
            let (ts, kernel) = tiny(op);
            let model = fit(&ts, &FitConfig::new(0.01, kernel)).unwrap();
            let fitted = fitted_values(&ts, &model).unwrap();
            let preds = predict_many(&model, ts.samples(), Execution::Parallel).unwrap();
            let scale = fitted.abs().max();
            for (i, p) in preds.iter().enumerate() {
                for (l, v) in p.values().iter().enumerate() {
                    assert!((v - fitted[(i, l)]).abs() <= 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn zero_coefficients_predict_zero() {
        let (ts, kernel) = tiny(OperatorKind::Integral);
        let mut model = fit(&ts, &FitConfig::new(0.1, kernel)).unwrap();
        model.alpha.fill(0.0);
        let p = predict(&model, &ts.samples()[0], &Grid::uniform(0.0, 1.0, 17).unwrap()).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_rejects_off_grid_evaluation() {
        let (ts, kernel) = tiny(OperatorKind::Identity);
        let model = fit(&ts, &FitConfig::new(0.1, kernel)).unwrap();
        let off = Grid::uniform(0.0, 1.0, 7).unwrap();
        assert!(matches!(
            predict(&model, &ts.samples()[0], &off),
            Err(Error::UnsupportedEvaluation(_))
        ));
        // integral operator evaluates anywhere inside the interval
        let (ts, kernel) = tiny(OperatorKind::Integral);
        let model = fit(&ts, &FitConfig::new(0.1, kernel)).unwrap();
        assert_eq!(predict(&model, &ts.samples()[0], &off).unwrap().values().len(), 7);
        let outside = Grid::uniform(-0.5, 1.0, 7).unwrap();
        assert!(predict(&model, &ts.samples()[0], &outside).is_err());
    }

    #[test]
    fn objective_at_zero_is_response_energy() {
        let (ts, kernel) = tiny(OperatorKind::Integral);
        let zero = DMatrix::zeros(ts.n(), ts.m());
        let got = objective(&ts, &kernel, 0.4, &zero).unwrap();
        let want: f64 = ts
            .samples()
            .iter()
            .map(|s| {
                let y = s.y.as_ref().unwrap();
                crate::grid::l2_inner(y, y).unwrap()
            })
            .sum();
        assert!((got - want).abs() <= 1e-14 * want);
        let ts0 = ts
            .with_responses(ts.samples().iter().map(|_| Curve::zeros(ts.t_grid().clone())).collect())
            .unwrap();
        assert_eq!(objective(&ts0, &kernel, 0.4, &zero).unwrap(), 0.0);
        assert!(objective(&ts, &kernel, 0.4, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn invalid_fit_configs() {
        let (ts, kernel) = tiny(OperatorKind::Integral);
        assert!(matches!(fit(&ts, &FitConfig::new(0.0, kernel)), Err(Error::InvalidConfig(_))));
        assert!(matches!(fit(&ts, &FitConfig::new(-1.0, kernel)), Err(Error::InvalidConfig(_))));
        let cg = FitConfig::new(1.0, kernel).with_solver(SolverKind::ConjugateGradient { tol: 0.0, max_iter: 5 });
        assert!(matches!(fit(&ts, &cg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn cholesky_failure_reports_min_eigenvalue() {
        // an indefinite kappa matrix makes the shifted system non-PD
        let (ts, kernel) = tiny(OperatorKind::Identity);
        let rg = crate::kernels::response_gram(ts.t_grid().clone(), kernel.response).unwrap();
        let mut bad = DMatrix::identity(ts.n(), ts.n());
        bad[(0, 0)] = -5.0;
        let gram = GramStructure::from_parts(bad, rg, OperatorKind::Identity);
        let err = solve::solve(&gram, 0.1, &ts.response_matrix(), SolverKind::Cholesky, 0.0, Execution::Sequential)
            .err()
            .unwrap();
        match err {
            Error::Numerical { min_eigenvalue: Some(v), .. } => assert!(v < -4.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
