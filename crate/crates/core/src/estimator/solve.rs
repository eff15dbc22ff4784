//! Solvers for `(K + λI) α = Y`.
//!
//! For the integral operator `K` is not symmetric but `W̃K` is, so the dense
//! and iterative paths solve the equivalent symmetric positive definite
//! system `(W̃K + λW̃) α = W̃Y`. The spectral path diagonalizes the two
//! Kronecker factors of `K` instead and never forms the `nm × nm` matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::gram::{flatten, unflatten, GramStructure};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernels::OperatorKind;

/// Above this many unknowns the dense Cholesky path hands over to CG.
pub const CHOLESKY_MAX_UNKNOWNS: usize = 4000;

const JITTER_LADDER: [f64; 3] = [0.0, 1e-10, 1e-8];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Cholesky,
    ConjugateGradient { tol: f64, max_iter: usize },
    /// Eigendecomposition of `[kappa_ij]` and of `W^½ K_y W^½`.
    Spectral,
}

impl SolverKind {
    pub fn validate(&self) -> Result<()> {
        if let SolverKind::ConjugateGradient { tol, max_iter } = *self {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::InvalidConfig(format!("cg tolerance must be positive, got {tol}")));
            }
            if max_iter == 0 {
                return Err(Error::InvalidConfig("cg max_iter must be at least 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Name of the path that produced the solution.
    pub solver: String,
    /// `‖(K + λI)α − Y‖₂`.
    pub residual_norm: f64,
    /// `residual_norm / ‖Y‖₂` (0 when `Y = 0`).
    pub relative_residual: f64,
    pub iterations: usize,
    /// Diagonal shift added to the symmetric system.
    pub jitter: f64,
}

pub(crate) struct Solution {
    pub alpha: DMatrix<f64>,
    pub diagnostics: SolveDiagnostics,
}

pub(crate) fn residual(gram: &GramStructure, lambda: f64, alpha: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    gram.apply(alpha) + alpha * lambda - y
}

fn finish(
    gram: &GramStructure,
    lambda: f64,
    y: &DMatrix<f64>,
    alpha: DMatrix<f64>,
    solver: &str,
    iterations: usize,
    jitter: f64,
) -> Result<Solution> {
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            message: format!("{solver} produced non-finite coefficients"),
            min_eigenvalue: None,
        });
    }
    let residual_norm = residual(gram, lambda, &alpha, y).norm();
    let y_norm = y.norm();
    Ok(Solution {
        alpha,
        diagnostics: SolveDiagnostics {
            solver: solver.to_string(),
            residual_norm,
            relative_residual: if y_norm > 0.0 { residual_norm / y_norm } else { 0.0 },
            iterations,
            jitter,
        },
    })
}

pub(crate) fn solve(
    gram: &GramStructure,
    lambda: f64,
    y: &DMatrix<f64>,
    solver: SolverKind,
    jitter: f64,
    exec: Execution,
) -> Result<Solution> {
    match solver {
        SolverKind::Cholesky if gram.n() * gram.m() > CHOLESKY_MAX_UNKNOWNS => {
            let max_iter = 10 * gram.n() * gram.m();
            conjugate_gradient(gram, lambda, y, 1e-10, max_iter, jitter)
        }
        SolverKind::Cholesky => cholesky(gram, lambda, y, jitter, exec),
        SolverKind::ConjugateGradient { tol, max_iter } => {
            conjugate_gradient(gram, lambda, y, tol, max_iter, jitter)
        }
        SolverKind::Spectral => {
            let factor = SpectralFactor::new(gram)?;
            let alpha = factor.solve(y, lambda + jitter)?;
            finish(gram, lambda, y, alpha, "spectral", 0, jitter)
        }
    }
}

fn cholesky(
    gram: &GramStructure,
    lambda: f64,
    y: &DMatrix<f64>,
    jitter: f64,
    exec: Execution,
) -> Result<Solution> {
    let (n, m) = (gram.n(), gram.m());
    let (system, scale) = gram.symmetric_system(lambda, exec);
    let rhs: Vec<f64> = flatten(y)
        .iter()
        .enumerate()
        .map(|(idx, v)| v * scale[idx % m])
        .collect();
    let rhs = DVector::from_vec(rhs);
    let unit = system.trace() / (n * m) as f64;

    for step in JITTER_LADDER {
        let shift = jitter + step * unit;
        let mut shifted = system.clone();
        if shift > 0.0 {
            for d in 0..n * m {
                shifted[(d, d)] += shift;
            }
        }
        let Some(chol) = shifted.clone().cholesky() else {
            continue;
        };
        let mut x = chol.solve(&rhs);
        // one step of iterative refinement against the shifted system
        let r = &rhs - &shifted * &x;
        x += chol.solve(&r);
        let alpha = unflatten(x.as_slice(), n, m)?;
        return finish(gram, lambda, y, alpha, "cholesky", 1, shift);
    }

    let min_eigenvalue = system.symmetric_eigenvalues().min();
    Err(Error::Numerical {
        message: format!(
            "Cholesky factorization failed after jitter up to {:e}",
            jitter + JITTER_LADDER[JITTER_LADDER.len() - 1] * unit
        ),
        min_eigenvalue: Some(min_eigenvalue),
    })
}

/// Jacobi-preconditioned CG on the symmetric system, matrix-free. Stops when
/// the residual of the original (unsymmetrized) system drops below
/// `tol · ‖Y‖`.
fn conjugate_gradient(
    gram: &GramStructure,
    lambda: f64,
    y: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
    jitter: f64,
) -> Result<Solution> {
    let (n, m) = (gram.n(), gram.m());
    let scale: Vec<f64> = match gram.operator() {
        OperatorKind::Identity => vec![1.0; m],
        OperatorKind::Integral => gram.response().weights().to_vec(),
    };
    let scale_rows = |x: &DMatrix<f64>| {
        let mut out = x.clone();
        for i in 0..n {
            for l in 0..m {
                out[(i, l)] *= scale[l];
            }
        }
        out
    };
    let apply = |x: &DMatrix<f64>| scale_rows(&(gram.apply(x) + x * lambda)) + x * jitter;

    let diag_unit: Vec<f64> = match gram.operator() {
        OperatorKind::Identity => vec![1.0; m],
        OperatorKind::Integral => {
            let w = gram.response().weights();
            (0..m).map(|l| w[l] * gram.response().ky()[(l, l)] * w[l]).collect()
        }
    };
    let precond = DMatrix::from_fn(n, m, |i, l| {
        let d = gram.kappa()[(i, i)] * diag_unit[l] + lambda * scale[l] + jitter;
        if d > 0.0 { 1.0 / d } else { 1.0 }
    });

    let y_norm = y.norm();
    let target = tol * y_norm;
    let b = scale_rows(y);
    let mut x = DMatrix::zeros(n, m);
    let mut r = b.clone();
    let mut z = r.component_mul(&precond);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let original_residual = |r: &DMatrix<f64>| {
        let mut s = 0.0;
        for i in 0..n {
            for l in 0..m {
                let v = r[(i, l)] / scale[l];
                s += v * v;
            }
        }
        s.sqrt()
    };

    for iter in 0..max_iter {
        if original_residual(&r) <= target {
            return finish(gram, lambda, y, x, "conjugate_gradient", iter, jitter);
        }
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::Numerical {
                message: format!("conjugate gradient breakdown at iteration {iter} (pᵀAp = {pap:e})"),
                min_eigenvalue: None,
            });
        }
        let step = rz / pap;
        x += &p * step;
        r -= &ap * step;
        z = r.component_mul(&precond);
        let rz_next = r.dot(&z);
        p = &z + &p * (rz_next / rz);
        rz = rz_next;
    }
    if original_residual(&r) <= target {
        return finish(gram, lambda, y, x, "conjugate_gradient", max_iter, jitter);
    }
    Err(Error::Numerical {
        message: format!(
            "conjugate gradient did not reach tolerance {tol:e} in {max_iter} iterations (residual {:e})",
            original_residual(&r) / y_norm.max(f64::MIN_POSITIVE)
        ),
        min_eigenvalue: None,
    })
}

/// Reusable diagonalization of `K = A ⊗ B`: with `A = UΛUᵀ` and
/// `Bᵀ = P M P⁻¹` (`P = W^½V`, `W^½K_yW^½ = VMVᵀ`), the system
/// `A X Bᵀ + λX = Y` decouples into `Z_ab (Λ_a M_b + λ) = (UᵀYP)_ab`.
#[derive(Debug, Clone)]
pub struct SpectralFactor {
    u: DMatrix<f64>,
    kappa_eigs: DVector<f64>,
    p: DMatrix<f64>,
    p_inv: DMatrix<f64>,
    response_eigs: DVector<f64>,
}

impl SpectralFactor {
    pub fn new(gram: &GramStructure) -> Result<Self> {
        let a = SymmetricEigen::new(gram.kappa().clone());
        let m = gram.m();
        let (p, p_inv, response_eigs) = match gram.operator() {
            OperatorKind::Identity => (
                DMatrix::identity(m, m),
                DMatrix::identity(m, m),
                DVector::from_element(m, 1.0),
            ),
            OperatorKind::Integral => {
                let root: Vec<f64> = gram.response().weights().iter().map(|w| w.sqrt()).collect();
                let ky = gram.response().ky();
                let mut s = DMatrix::zeros(m, m);
                for l in 0..m {
                    for lp in l..m {
                        let v = root[l] * ky[(l, lp)] * root[lp];
                        s[(l, lp)] = v;
                        s[(lp, l)] = v;
                    }
                }
                let eig = SymmetricEigen::new(s);
                let v = eig.eigenvectors;
                let p = DMatrix::from_fn(m, m, |l, b| root[l] * v[(l, b)]);
                let p_inv = DMatrix::from_fn(m, m, |b, l| v[(l, b)] / root[l]);
                (p, p_inv, eig.eigenvalues)
            }
        };
        Ok(Self {
            u: a.eigenvectors,
            kappa_eigs: a.eigenvalues,
            p,
            p_inv,
            response_eigs,
        })
    }

    /// Solves `(K + λI) α = Y` for the given `λ`.
    pub fn solve(&self, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
        let mut z = self.u.transpose() * y * &self.p;
        for a in 0..z.nrows() {
            for b in 0..z.ncols() {
                let d = self.kappa_eigs[a] * self.response_eigs[b] + lambda;
                if !(d > 0.0) {
                    return Err(Error::Numerical {
                        message: format!("shifted Gram matrix is not positive definite at λ = {lambda:e}"),
                        min_eigenvalue: Some(d - lambda),
                    });
                }
                z[(a, b)] /= d;
            }
        }
        Ok(&self.u * z * &self.p_inv)
    }

    /// Smallest eigenvalue of `K` (products of the factor spectra).
    pub fn min_eigenvalue(&self) -> f64 {
        self.kappa_eigs
            .iter()
            .flat_map(|a| self.response_eigs.iter().map(move |b| a * b))
            .fold(f64::INFINITY, f64::min)
    }
}
