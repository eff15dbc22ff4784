//! The block operator-kernel matrix `(K_ij)`, both as a dense `nm × nm`
//! matrix and as its factored form `K_ij = kappa_ij · B`.
//!
//! Coefficients are stored sample-major: row `i` of an `n × m` matrix holds
//! `α_i` on the t-grid, and the flattened index of `α_il` is `i·m + l`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernels::{kappa_gram, operator_block, response_gram, KernelConfig, OperatorKind, ResponseGram};
use crate::sample::TrainingSet;

/// `K = [kappa_ij] ⊗ B` with `B = K_y·W` (integral) or `I` (identity).
#[derive(Debug, Clone)]
pub struct GramStructure {
    kappa: DMatrix<f64>,
    rg: ResponseGram,
    operator: OperatorKind,
}

impl GramStructure {
    pub fn build(ts: &TrainingSet, kernel: &KernelConfig, exec: Execution) -> Result<Self> {
        kernel.validate()?;
        let kappa = kappa_gram(ts.samples(), kernel, exec)?;
        let rg = response_gram(ts.t_grid().clone(), kernel.response)?;
        Ok(Self::from_parts(kappa, rg, kernel.operator))
    }

    pub fn from_parts(kappa: DMatrix<f64>, rg: ResponseGram, operator: OperatorKind) -> Self {
        Self {
            kappa,
            rg,
            operator,
        }
    }

    pub fn kappa(&self) -> &DMatrix<f64> {
        &self.kappa
    }

    pub fn response(&self) -> &ResponseGram {
        &self.rg
    }

    pub fn operator(&self) -> OperatorKind {
        self.operator
    }

    pub fn n(&self) -> usize {
        self.kappa.nrows()
    }

    pub fn m(&self) -> usize {
        self.rg.m()
    }

    /// `K α` for `α` given as an `n × m` coefficient matrix.
    pub fn apply(&self, alpha: &DMatrix<f64>) -> DMatrix<f64> {
        let mixed = &self.kappa * alpha;
        match self.operator {
            OperatorKind::Identity => mixed,
            // row i of (A X) B^T is B (A X)_i
            OperatorKind::Integral => mixed * self.rg.integral_block().transpose(),
        }
    }

    /// The dense `nm × nm` matrix.
    pub fn dense(&self, exec: Execution) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let unit = operator_block(1.0, &self.rg, self.operator);
        let rows = exec.map(n, |i| {
            let mut band = DMatrix::zeros(m, n * m);
            for j in 0..n {
                band.view_mut((0, j * m), (m, m))
                    .copy_from(&(&unit * self.kappa[(i, j)]));
            }
            band
        });
        let mut out = DMatrix::zeros(n * m, n * m);
        for (i, band) in rows.into_iter().enumerate() {
            out.view_mut((i * m, 0), (m, n * m)).copy_from(&band);
        }
        out
    }

    /// The symmetric system `W̃(K + λI)` for the integral operator, or
    /// `K + λI` for the identity operator, together with the matching
    /// right-hand-side scaling (`W̃` diagonal or ones).
    pub(crate) fn symmetric_system(&self, lambda: f64, exec: Execution) -> (DMatrix<f64>, Vec<f64>) {
        let (n, m) = (self.n(), self.m());
        let (unit, scale) = match self.operator {
            OperatorKind::Identity => (DMatrix::identity(m, m), vec![1.0; m]),
            OperatorKind::Integral => (self.rg.weighted_symmetric(), self.rg.weights().to_vec()),
        };
        let rows = exec.map(n, |i| {
            let mut band = DMatrix::zeros(m, n * m);
            for j in 0..n {
                band.view_mut((0, j * m), (m, m))
                    .copy_from(&(&unit * self.kappa[(i, j)]));
            }
            for l in 0..m {
                band[(l, i * m + l)] += lambda * scale[l];
            }
            band
        });
        let mut out = DMatrix::zeros(n * m, n * m);
        for (i, band) in rows.into_iter().enumerate() {
            out.view_mut((i * m, 0), (m, n * m)).copy_from(&band);
        }
        (out, scale)
    }
}

/// Dense block Gram matrix; block `(i, j)` is `operator_block(kappa(x_i, x_j))`.
pub fn assemble_gram(ts: &TrainingSet, kernel: &KernelConfig) -> Result<DMatrix<f64>> {
    assemble_gram_with(ts, kernel, Execution::default())
}

pub fn assemble_gram_with(
    ts: &TrainingSet,
    kernel: &KernelConfig,
    exec: Execution,
) -> Result<DMatrix<f64>> {
    Ok(GramStructure::build(ts, kernel, exec)?.dense(exec))
}

/// Flattens an `n × m` coefficient matrix sample-major.
pub fn flatten(x: &DMatrix<f64>) -> Vec<f64> {
    // nalgebra is column-major; the transpose's storage is row-major of x
    x.transpose().as_slice().to_vec()
}

pub fn unflatten(v: &[f64], n: usize, m: usize) -> Result<DMatrix<f64>> {
    if v.len() != n * m {
        return Err(Error::Dimension(format!(
            "vector of length {} cannot be shaped {n}×{m}",
            v.len()
        )));
    }
    Ok(DMatrix::from_row_slice(n, m, v))
}
