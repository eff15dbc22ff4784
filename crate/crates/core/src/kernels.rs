//! Scalar kernels on discrete vectors and curve tuples, the response kernel
//! `k_y`, and the operator-valued kernel
//!
//! ```text
//! (K(x_i, x_j) g)(t) = [k_d(x_i^d, x_j^d) + k_c(x_i^c, x_j^c)] ∫ k_y(s, t) g(s) ds
//! ```
//!
//! realized on the response grid as `m × m` blocks. A response function `g`
//! is represented by its values at the grid points, and the integral
//! operator becomes `K_y · W` with `W = diag(weights)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{l2_distance_sq, l2_inner, Curve, Grid};
use crate::sample::Sample;

fn gaussian(dist_sq: f64, sigma: f64) -> f64 {
    (-dist_sq / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DiscreteKernel {
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionalKernel {
    /// Sum of per-component L2 inner products.
    Linear,
    /// `exp(-Σ_q ‖x_iq - x_jq‖² / (2σ²))`.
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResponseKernel {
    Gaussian { sigma: f64 },
}

impl ResponseKernel {
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match *self {
            ResponseKernel::Gaussian { sigma } => gaussian((s - t) * (s - t), sigma),
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            ResponseKernel::Gaussian { sigma } => sigma,
        }
    }
}

/// Which bounded operator on the response space the kernel scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `g ↦ ∫ k_y(s, ·) g(s) ds`.
    #[default]
    Integral,
    /// `g ↦ g`; predictions exist only on the training t-grid.
    Identity,
}

/// How the discrete and functional scalar kernels are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    #[default]
    Sum,
}

/// Missing fields take their [`Default`] values when deserialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub discrete: DiscreteKernel,
    pub functional: FunctionalKernel,
    pub response: ResponseKernel,
    pub operator: OperatorKind,
    pub combine: Combine,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            discrete: DiscreteKernel::Gaussian { sigma: 1.0 },
            functional: FunctionalKernel::Gaussian { sigma: 1.0 },
            response: ResponseKernel::Gaussian { sigma: 0.1 },
            operator: OperatorKind::Integral,
            combine: Combine::Sum,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, sigma: f64| {
            if sigma.is_finite() && sigma > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} bandwidth must be positive and finite, got {sigma}"
                )))
            }
        };
        let DiscreteKernel::Gaussian { sigma } = self.discrete;
        check("discrete kernel", sigma)?;
        if let FunctionalKernel::Gaussian { sigma } = self.functional {
            check("functional kernel", sigma)?;
        }
        check("response kernel", self.response.sigma())
    }

    pub fn sigma_d(&self) -> f64 {
        let DiscreteKernel::Gaussian { sigma } = self.discrete;
        sigma
    }

    /// `None` for the linear functional kernel.
    pub fn sigma_c(&self) -> Option<f64> {
        match self.functional {
            FunctionalKernel::Linear => None,
            FunctionalKernel::Gaussian { sigma } => Some(sigma),
        }
    }

    pub fn sigma_y(&self) -> f64 {
        self.response.sigma()
    }
}

/// Gaussian kernel on discrete covariate vectors. Empty vectors (no discrete
/// covariates) contribute nothing and evaluate to 0.
pub fn k_discrete(u: &[f64], v: &[f64], kernel: DiscreteKernel) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "discrete covariates of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    if u.is_empty() {
        return Ok(0.0);
    }
    let dist_sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    let DiscreteKernel::Gaussian { sigma } = kernel;
    Ok(gaussian(dist_sq, sigma))
}

pub fn k_functional(xi: &[Curve], xj: &[Curve], kernel: FunctionalKernel) -> Result<f64> {
    if xi.len() != xj.len() {
        return Err(Error::Dimension(format!(
            "{} vs {} functional covariates",
            xi.len(),
            xj.len()
        )));
    }
    match kernel {
        FunctionalKernel::Linear => xi
            .iter()
            .zip(xj)
            .map(|(a, b)| l2_inner(a, b))
            .sum::<Result<f64>>(),
        FunctionalKernel::Gaussian { sigma } => {
            let d = xi
                .iter()
                .zip(xj)
                .map(|(a, b)| l2_distance_sq(a, b))
                .sum::<Result<f64>>()?;
            Ok(gaussian(d, sigma))
        }
    }
}

/// The scalar factor `k_d + k_c` of the operator-valued kernel.
pub fn kappa(xi: &Sample, xj: &Sample, cfg: &KernelConfig) -> Result<f64> {
    let Combine::Sum = cfg.combine;
    Ok(k_discrete(&xi.xd, &xj.xd, cfg.discrete)? + k_functional(&xi.xc, &xj.xc, cfg.functional)?)
}

/// `[kappa(a_i, b_j)]` for two sample lists, rows evaluated under `exec`.
pub fn kappa_matrix(
    rows: &[Sample],
    cols: &[Sample],
    cfg: &KernelConfig,
    exec: crate::Execution,
) -> Result<DMatrix<f64>> {
    let row_values = exec.map(rows.len(), |i| {
        cols.iter()
            .map(|xj| kappa(&rows[i], xj, cfg))
            .collect::<Result<Vec<f64>>>()
    });
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    for (i, row) in row_values.into_iter().enumerate() {
        for (j, v) in row?.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Symmetric `[kappa(x_i, x_j)]` over one sample list; only the upper
/// triangle is evaluated, so the result is exactly symmetric.
pub fn kappa_gram(
    samples: &[Sample],
    cfg: &KernelConfig,
    exec: crate::Execution,
) -> Result<DMatrix<f64>> {
    let n = samples.len();
    let row_values = exec.map(n, |i| {
        (i..n)
            .map(|j| kappa(&samples[i], &samples[j], cfg))
            .collect::<Result<Vec<f64>>>()
    });
    let mut out = DMatrix::zeros(n, n);
    for (i, row) in row_values.into_iter().enumerate() {
        for (off, v) in row?.into_iter().enumerate() {
            out[(i, i + off)] = v;
            out[(i + off, i)] = v;
        }
    }
    Ok(out)
}

/// `k_y` evaluated on the response grid, with the grid's quadrature weights.
#[derive(Debug, Clone)]
pub struct ResponseGram {
    grid: Arc<Grid>,
    kernel: ResponseKernel,
    ky: DMatrix<f64>,
}

impl ResponseGram {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel(&self) -> ResponseKernel {
        self.kernel
    }

    /// `K_y[l, l'] = k_y(t_l, t_l')`.
    pub fn ky(&self) -> &DMatrix<f64> {
        &self.ky
    }

    pub fn weights(&self) -> &[f64] {
        self.grid.weights()
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    /// `K_y · W`, the discretized integral operator.
    pub fn integral_block(&self) -> DMatrix<f64> {
        let w = self.grid.weights();
        DMatrix::from_fn(self.m(), self.m(), |l, lp| self.ky[(l, lp)] * w[lp])
    }

    /// `W · K_y · W`, exactly symmetric.
    pub fn weighted_symmetric(&self) -> DMatrix<f64> {
        let w = self.grid.weights();
        let m = self.m();
        let mut out = DMatrix::zeros(m, m);
        for l in 0..m {
            for lp in l..m {
                let v = w[l] * self.ky[(l, lp)] * w[lp];
                out[(l, lp)] = v;
                out[(lp, l)] = v;
            }
        }
        out
    }
}

pub fn response_gram(t_grid: Arc<Grid>, kernel: ResponseKernel) -> Result<ResponseGram> {
    if !(kernel.sigma().is_finite() && kernel.sigma() > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "response kernel bandwidth must be positive, got {}",
            kernel.sigma()
        )));
    }
    let t = t_grid.points();
    let m = t.len();
    let mut ky = DMatrix::zeros(m, m);
    for l in 0..m {
        for lp in l..m {
            let v = kernel.eval(t[l], t[lp]);
            ky[(l, lp)] = v;
            ky[(lp, l)] = v;
        }
    }
    Ok(ResponseGram {
        grid: t_grid,
        kernel,
        ky,
    })
}

/// The `m × m` block `K(x_i, x_j)` for scalar factor `kappa_ij`.
pub fn operator_block(kappa_ij: f64, rg: &ResponseGram, operator: OperatorKind) -> DMatrix<f64> {
    match operator {
        OperatorKind::Integral => rg.integral_block() * kappa_ij,
        OperatorKind::Identity => DMatrix::identity(rg.m(), rg.m()) * kappa_ij,
    }
}
