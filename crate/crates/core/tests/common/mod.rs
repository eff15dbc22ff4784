//! Independent reference computations for integration tests. Nothing here
//! calls the estimator; kernels are re-derived from their closed forms with
//! explicit loops.

#![allow(dead_code)]

use std::sync::Arc;

use funkernel::kernels::{DiscreteKernel, FunctionalKernel, KernelConfig, OperatorKind, ResponseKernel};
use funkernel::{Curve, Grid, Sample, TrainingSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Trapezoid weights written out directly.
pub fn weights(points: &[f64]) -> Vec<f64> {
    let m = points.len();
    (0..m)
        .map(|l| {
            let lo = if l == 0 { 0 } else { l - 1 };
            let hi = if l == m - 1 { m - 1 } else { l + 1 };
            (points[hi] - points[lo]) / 2.0
        })
        .collect()
}

pub fn brute_kappa(a: &Sample, b: &Sample, cfg: &KernelConfig) -> f64 {
    let kd = if a.xd.is_empty() {
        0.0
    } else {
        let DiscreteKernel::Gaussian { sigma } = cfg.discrete;
        let d2: f64 = a.xd.iter().zip(&b.xd).map(|(u, v)| (u - v).powi(2)).sum();
        gauss(d2, sigma)
    };
    let mut inner = 0.0;
    let mut dist = 0.0;
    for (x, y) in a.xc.iter().zip(&b.xc) {
        let w = weights(x.grid().points());
        for l in 0..w.len() {
            inner += w[l] * x.values()[l] * y.values()[l];
            dist += w[l] * (x.values()[l] - y.values()[l]).powi(2);
        }
    }
    let kc = match cfg.functional {
        FunctionalKernel::Linear => inner,
        FunctionalKernel::Gaussian { sigma } => gauss(dist, sigma),
    };
    kd + kc
}

/// Dense `nm × nm` Gram matrix assembled entry by entry.
pub fn brute_gram(ts: &TrainingSet, cfg: &KernelConfig) -> Vec<Vec<f64>> {
    let (n, m) = (ts.n(), ts.m());
    let t = ts.t_grid().points();
    let w = weights(t);
    let ResponseKernel::Gaussian { sigma } = cfg.response;
    let mut out = vec![vec![0.0; n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            let k = brute_kappa(&ts.samples()[i], &ts.samples()[j], cfg);
            for l in 0..m {
                for lp in 0..m {
                    out[i * m + l][j * m + lp] = match cfg.operator {
                        OperatorKind::Integral => k * gauss((t[l] - t[lp]).powi(2), sigma) * w[lp],
                        OperatorKind::Identity => {
                            if l == lp {
                                k
                            } else {
                                0.0
                            }
                        }
                    };
                }
            }
        }
    }
    out
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// Discretized regularized risk over a flattened coefficient vector, from the
/// brute-force Gram matrix.
pub struct BruteObjective {
    pub gram: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub lambda: f64,
    pub m: usize,
}

impl BruteObjective {
    pub fn new(ts: &TrainingSet, cfg: &KernelConfig, lambda: f64) -> Self {
        let m = ts.m();
        let y = ts
            .samples()
            .iter()
            .flat_map(|s| s.y.as_ref().unwrap().values().to_vec())
            .collect();
        Self {
            gram: brute_gram(ts, cfg),
            y,
            w: weights(ts.t_grid().points()),
            lambda,
            m,
        }
    }

    pub fn value(&self, alpha: &[f64]) -> f64 {
        let ka = matvec(&self.gram, alpha);
        let mut loss = 0.0;
        let mut reg = 0.0;
        for idx in 0..alpha.len() {
            let w = self.w[idx % self.m];
            loss += w * (self.y[idx] - ka[idx]).powi(2);
            reg += w * ka[idx] * alpha[idx];
        }
        loss + self.lambda * reg
    }

    /// Minimizes the quadratic independently of the library: the Hessian and
    /// gradient at zero are extracted from `value` by exact polarization
    /// (the objective is quadratic), then conjugate gradient iterates to
    /// convergence on that extracted system.
    pub fn minimize(&self) -> Vec<f64> {
        let d = self.y.len();
        let f0 = self.value(&vec![0.0; d]);
        let unit = |i: usize| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            e
        };
        let fi: Vec<f64> = (0..d).map(|i| self.value(&unit(i))).collect();
        let fm: Vec<f64> = (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = -1.0;
                self.value(&e)
            })
            .collect();
        // f(x) = f0 + gᵀx + ½ xᵀHx
        let g: Vec<f64> = (0..d).map(|i| (fi[i] - fm[i]) / 2.0).collect();
        let mut h = vec![vec![0.0; d]; d];
        for i in 0..d {
            h[i][i] = fi[i] + fm[i] - 2.0 * f0;
        }
        // f(e_i + e_j) = f0 + g_i + g_j + ½(H_ii + H_jj) + H_ij
        for i in 0..d {
            for j in i + 1..d {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e[j] = 1.0;
                let hij = self.value(&e) - f0 - g[i] - g[j] - 0.5 * (h[i][i] + h[j][j]);
                h[i][j] = hij;
                h[j][i] = hij;
            }
        }
        // solve H x = -g by CG
        let mut x = vec![0.0; d];
        let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut p = r.clone();
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        let stop = 1e-30 * rr.max(1e-300);
        for _ in 0..50 * d {
            if rr <= stop {
                break;
            }
            let hp = matvec(&h, &p);
            let php: f64 = p.iter().zip(&hp).map(|(a, b)| a * b).sum();
            if php <= 0.0 {
                break;
            }
            let a = rr / php;
            for i in 0..d {
                x[i] += a * p[i];
                r[i] -= a * hp[i];
            }
            let rr_next: f64 = r.iter().map(|v| v * v).sum();
            for i in 0..d {
                p[i] = r[i] + rr_next / rr * p[i];
            }
            rr = rr_next;
        }
        x
    }
}

pub struct RandomProblem {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub k: usize,
    pub operator: OperatorKind,
    pub functional_linear: bool,
}

/// Random smooth curves on random non-uniform grids.
pub fn random_training_set(spec: &RandomProblem, seed: u64) -> (TrainingSet, KernelConfig) {
    let mut r = rng(seed);
    let random_grid = |count: usize, r: &mut ChaCha8Rng| {
        let mut pts = vec![0.0];
        for _ in 1..count {
            let last = *pts.last().unwrap();
            pts.push(last + r.random_range(0.05..0.3));
        }
        Arc::new(Grid::new(pts).unwrap())
    };
    let s_grids: Vec<Arc<Grid>> = (0..spec.p).map(|_| random_grid(9, &mut r)).collect();
    let t_grid = random_grid(spec.m, &mut r);
    let samples = (0..spec.n)
        .map(|i| {
            let xd = (0..spec.k).map(|_| r.random_range(-1.0..1.0)).collect();
            let xc = s_grids
                .iter()
                .map(|g| {
                    let (a, b, c) = (r.random_range(-1.0..1.0), r.random_range(0.5..3.0), r.random_range(0.0..6.0));
                    Curve::from_fn(g.clone(), |s| a + (b * s + c).sin()).unwrap()
                })
                .collect();
            let y = Curve::new(t_grid.clone(), (0..spec.m).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
            Sample::new(format!("r{i}"), xd, xc, Some(y))
        })
        .collect();
    let cfg = KernelConfig {
        discrete: DiscreteKernel::Gaussian { sigma: r.random_range(0.5..2.0) },
        functional: if spec.functional_linear {
            FunctionalKernel::Linear
        } else {
            FunctionalKernel::Gaussian { sigma: r.random_range(0.5..2.0) }
        },
        response: ResponseKernel::Gaussian { sigma: r.random_range(0.2..0.6) },
        operator: spec.operator,
        ..KernelConfig::default()
    };
    (TrainingSet::new(samples).unwrap(), cfg)
}

/// Smallest eigenvalue of a small symmetric matrix (Jacobi rotations).
pub fn min_eigenvalue(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
}
