//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{min_eigenvalue, random_training_set, BruteObjective, RandomProblem};
use funkernel::data::{
    center_responses, decode_model, encode_model, evaluate, generate_synthetic, load_model, save_model,
    CategoricalEffect, CategoryLevel, CovariateSpec, CurveSpec, GridSpec, SurfaceSpec, SyntheticConfig,
};
use funkernel::estimator::{fitted_values, flatten};
use funkernel::grid::{integrate, l2_distance_sq, l2_inner};
use funkernel::kernels::{
    kappa, response_gram, DiscreteKernel, FunctionalKernel, KernelConfig, OperatorKind, ResponseKernel,
};
use funkernel::{
    cross_validate, fit, predict_many, Curve, CvGrid, Execution, FitConfig, Grid, Sample, SolverKind, TrainingSet,
};
use nalgebra::DMatrix;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_equivalence() -> Outcome {
    let mut worst_gap: f64 = 0.0;
    let mut worst_drop: f64 = 0.0;
    let mut r = common::rng(1000);
    for case in 0..20u64 {
        let spec = RandomProblem {
            n: 3 + (case as usize % 4),
            m: 4 + (case as usize % 5),
            p: 1 + (case as usize % 2),
            k: if (case / 2) % 2 == 0 { 0 } else { 2 },
            operator: if case < 10 { OperatorKind::Integral } else { OperatorKind::Identity },
            functional_linear: case % 3 == 0,
        };
        let (ts, kernel) = random_training_set(&spec, case);
        let lambda = 10f64.powf(r.random_range(-3.0..0.0));
        let model = fit(&ts, &FitConfig::new(lambda, kernel)).map_err(|e| e.to_string())?;
        let oracle = BruteObjective::new(&ts, &kernel, lambda);
        let alpha = flatten(model.alpha());
        let at_fit = oracle.value(&alpha);
        let best = oracle.value(&oracle.minimize());
        let gap = (at_fit - best).abs() / best.abs();
        worst_gap = worst_gap.max(gap);
        check(gap <= 1e-6, || format!("case {case}: objective {at_fit} vs oracle minimum {best}"))?;

        let norm = alpha.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..1000 {
            let delta: Vec<f64> = alpha.iter().map(|_| r.random_range(-1.0..1.0)).collect();
            let dn = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
            let moved: Vec<f64> = alpha.iter().zip(&delta).map(|(a, d)| a + d * 1e-3 * norm / dn).collect();
            let drop = at_fit - oracle.value(&moved);
            worst_drop = worst_drop.max(drop);
            check(drop <= 1e-10, || format!("case {case}: perturbation lowered objective by {drop:e}"))?;
        }
    }
    Ok(format!(
        "20 problems, max relative gap {worst_gap:.2e}, max perturbation drop {worst_drop:.2e}"
    ))
}

fn operator_positivity() -> Outcome {
    let mut worst: f64 = f64::INFINITY;
    for case in 0..100u64 {
        let spec = RandomProblem {
            n: 2 + (case as usize % 7),
            m: 3 + (case as usize % 6),
            p: 1 + (case as usize % 3),
            k: [0, 1, 3][case as usize % 3],
            operator: if case % 2 == 0 { OperatorKind::Integral } else { OperatorKind::Identity },
            functional_linear: case % 4 == 1,
        };
        let (ts, kernel) = random_training_set(&spec, 5000 + case);
        let mut r = common::rng(case);
        let (n, m) = (ts.n(), ts.m());
        let g: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let rg = response_gram(ts.t_grid().clone(), kernel.response).map_err(|e| e.to_string())?;
        let w = ts.t_grid().weights();
        let mut mat = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let k = kappa(&ts.samples()[i], &ts.samples()[j], &kernel).map_err(|e| e.to_string())?;
                let block = funkernel::kernels::operator_block(k, &rg, kernel.operator);
                // ⟨K(x_i, x_j) g_j, g_i⟩_W
                let kg = &block * nalgebra::DVector::from_column_slice(&g[j]);
                mat[i][j] = (0..m).map(|l| w[l] * kg[l] * g[i][l]).sum();
            }
        }
        // symmetrize rounding only; asymmetry beyond rounding is a failure
        for i in 0..n {
            for j in i + 1..n {
                let scale = mat[i][j].abs().max(mat[j][i].abs()).max(1.0);
                check((mat[i][j] - mat[j][i]).abs() <= 1e-10 * scale, || {
                    format!("case {case}: operator not self-adjoint in W ({} vs {})", mat[i][j], mat[j][i])
                })?;
                let avg = 0.5 * (mat[i][j] + mat[j][i]);
                mat[i][j] = avg;
                mat[j][i] = avg;
            }
        }
        let trace: f64 = (0..n).map(|i| mat[i][i]).sum();
        let min = min_eigenvalue(&mat);
        worst = worst.min(min / trace);
        check(min >= -1e-8 * trace, || format!("case {case}: min eigenvalue {min:e}, trace {trace:e}"))?;
    }
    Ok(format!("100 collections, worst min eigenvalue / trace {worst:.2e}"))
}

fn recovery_config(n: usize, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        n,
        s_grid: GridSpec { start: 0.0, end: 1.0, points: 51 },
        t_grid: GridSpec { start: 0.0, end: 1.0, points: 31 },
        intercept: CurveSpec::Zero,
        surfaces: vec![
            SurfaceSpec::GaussianBump {
                center_s: 0.3,
                center_t: 0.4,
                scale: 0.25,
                amplitude: 2.0,
            },
            SurfaceSpec::GaussianBump {
                center_s: 0.7,
                center_t: 0.6,
                scale: 0.3,
                amplitude: -1.5,
            },
        ],
        covariates: CovariateSpec::default(),
        categorical: vec![CategoricalEffect {
            column: "group".into(),
            levels: vec![
                CategoryLevel {
                    label: "a".into(),
                    offset: CurveSpec::Zero,
                },
                CategoryLevel {
                    label: "b".into(),
                    offset: CurveSpec::GaussianBump {
                        center: 0.5,
                        scale: 0.2,
                        amplitude: 0.5,
                    },
                },
            ],
        }],
        noise_sigma: 0.1,
        seed,
    }
}

fn recovery_ise(train: &TrainingSet, test: &[Sample], truth: &[Curve]) -> Result<f64, String> {
    let (centered, mean) = center_responses(train).map_err(|e| e.to_string())?;
    let base = FitConfig::new(
        1.0,
        KernelConfig {
            discrete: DiscreteKernel::Gaussian { sigma: 1.0 },
            functional: FunctionalKernel::Gaussian { sigma: 2.0 },
            response: ResponseKernel::Gaussian { sigma: 0.1 },
            operator: OperatorKind::Integral,
            ..KernelConfig::default()
        },
    )
    .with_solver(SolverKind::Spectral);
    let grid = CvGrid {
        lambdas: vec![1e-4, 1e-3, 1e-2, 1e-1],
        sigma_d: vec![0.5, 1.0, 2.0],
        sigma_c: vec![1.0, 2.0, 4.0, 8.0],
        sigma_y: vec![0.05, 0.1, 0.2],
    };
    let cv = cross_validate(&centered, &base, &grid, 5, 0).map_err(|e| e.to_string())?;
    let model = fit(&centered, &cv.best)
        .and_then(|m| m.with_response_offset(mean))
        .map_err(|e| e.to_string())?;
    let preds = predict_many(&model, test, Execution::Parallel).map_err(|e| e.to_string())?;
    let metrics = evaluate(&preds, truth, train.t_grid()).map_err(|e| e.to_string())?;
    Ok(metrics.mean_ise)
}

fn linear_model_recovery() -> Outcome {
    let floor = 0.1f64.powi(2) * 1.0;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for seed in [11u64, 12, 13] {
        let data = generate_synthetic(&recovery_config(150, seed)).map_err(|e| e.to_string())?;
        let (pool, held) = data.split(100).map_err(|e| e.to_string())?;
        let test: Vec<Sample> = held.training.samples().iter().map(Sample::without_response).collect();
        let small = pool.training.subset(&(0..20).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        let ise_20 = recovery_ise(&small, &test, &held.truth)?;
        let ise_100 = recovery_ise(&pool.training, &test, &held.truth)?;
        lines.push(format!("seed {seed}: ISE n=20 {ise_20:.4}, n=100 {ise_100:.4}"));
        if ise_100 > 0.5 * ise_20 {
            failures.push(format!("seed {seed}: n=100 ISE {ise_100:.4} > 0.5 × {ise_20:.4}"));
        }
        if ise_100 > 3.0 * floor {
            failures.push(format!("seed {seed}: n=100 ISE {ise_100:.4} > 3 × noise floor {floor}"));
        }
    }
    if failures.is_empty() {
        Ok(lines.join("; "))
    } else {
        Err(format!("{} [{}]", failures.join("; "), lines.join("; ")))
    }
}

fn interpolation_limit() -> Outcome {
    let (ts, kernel) = random_training_set(
        &RandomProblem {
            n: 10,
            m: 12,
            p: 2,
            k: 2,
            operator: OperatorKind::Integral,
            functional_linear: false,
        },
        4,
    );
    let kernel = KernelConfig {
        response: ResponseKernel::Gaussian { sigma: 0.05 },
        ..kernel
    };
    let model = fit(&ts, &FitConfig::new(1e-8, kernel)).map_err(|e| e.to_string())?;
    let fitted = fitted_values(&ts, &model).map_err(|e| e.to_string())?;
    let y = ts.response_matrix();
    let w = ts.t_grid().weights();
    let wnorm = |x: &DMatrix<f64>| {
        let mut s = 0.0;
        for i in 0..x.nrows() {
            for l in 0..x.ncols() {
                s += w[l] * x[(i, l)] * x[(i, l)];
            }
        }
        s.sqrt()
    };
    let ratio = wnorm(&(&y - &fitted)) / wnorm(&y);
    check(ratio <= 1e-3, || format!("residual ratio {ratio:e}"))?;
    Ok(format!("residual / ‖Y‖_W = {ratio:.2e}"))
}

fn quadrature_accuracy() -> Outcome {
    let unit = Arc::new(Grid::uniform(0.0, 1.0, 101).unwrap());
    let s = Curve::from_fn(unit.clone(), |x| x).unwrap();
    let sq = Curve::from_fn(unit.clone(), |x| x * x).unwrap();
    let zero = Curve::zeros(unit.clone());
    let one = Curve::from_fn(unit.clone(), |_| 1.0).unwrap();
    let third = 1.0 / 3.0;
    let mut worst: f64 = 0.0;
    let mut expect = |label: &str, got: f64, want: f64, tol: f64| -> Result<(), String> {
        let err = (got - want).abs();
        worst = worst.max(err);
        check(err <= tol, || format!("{label}: {got} vs {want}"))
    };
    expect("∫s² ds", integrate(&sq), third, 2e-4)?;
    expect("‖s − 0‖²", l2_distance_sq(&s, &zero).map_err(|e| e.to_string())?, third, 2e-4)?;
    expect("∫1 ds", integrate(&one), 1.0, 1e-12)?;
    expect("⟨1, 1⟩", l2_inner(&one, &one).map_err(|e| e.to_string())?, 1.0, 1e-12)?;

    let shifted: Vec<Curve> = vec![Curve::new(unit.clone(), s.values().iter().map(|v| v + 1.0).collect()).unwrap()];
    let m = evaluate(&shifted, &[one.clone()], &unit).map_err(|e| e.to_string())?;
    expect("ISE of +s", m.mean_ise, third, 2e-4)?;

    let fixed = |curve: CurveSpec, surface: SurfaceSpec| SyntheticConfig {
        n: 2,
        s_grid: GridSpec { start: 0.0, end: 1.0, points: 101 },
        t_grid: GridSpec { start: 0.0, end: 1.0, points: 101 },
        intercept: CurveSpec::Zero,
        surfaces: vec![surface],
        covariates: CovariateSpec::Fixed { curve },
        categorical: vec![],
        noise_sigma: 0.0,
        seed: 0,
    };
    let st = generate_synthetic(&fixed(
        CurveSpec::Polynomial { coefficients: vec![0.0, 1.0] },
        SurfaceSpec::Polynomial { coefficients: vec![0.0, 0.0, 0.0, 0.0, 1.0] },
    ))
    .map_err(|e| e.to_string())?;
    for y in &st.truth {
        for (t, v) in unit.points().iter().zip(y.values()) {
            expect("synthetic t/3", *v, t / 3.0, 2e-4)?;
        }
    }
    let ones = generate_synthetic(&fixed(
        CurveSpec::Constant { value: 1.0 },
        SurfaceSpec::Polynomial { coefficients: vec![1.0] },
    ))
    .map_err(|e| e.to_string())?;
    for y in &ones.truth {
        for v in y.values() {
            expect("synthetic unit integral", *v, 1.0, 1e-12)?;
        }
    }
    Ok(format!("max abs error {worst:.2e}"))
}

fn determinism_and_persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |tag: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let data = generate_synthetic(&recovery_config(40, 99)).map_err(|e| e.to_string())?;
        let (train, test) = data.split(30).map_err(|e| e.to_string())?;
        let model = fit(&train.training, &FitConfig::new(1e-2, KernelConfig::default())).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("{tag}.fk"));
        save_model(&model, &path).map_err(|e| e.to_string())?;
        let loaded = load_model(&path).map_err(|e| e.to_string())?;
        check(loaded.alpha() == model.alpha(), || "coefficients changed on reload".into())?;
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        check(
            encode_model(&decode_model(&bytes).map_err(|e| e.to_string())?).map_err(|e| e.to_string())? == bytes,
            || "model re-encoding differs".into(),
        )?;
        let xs: Vec<Sample> = test.training.samples().iter().map(Sample::without_response).collect();
        let direct = predict_many(&model, &xs, Execution::Parallel).map_err(|e| e.to_string())?;
        let reloaded = predict_many(&loaded, &xs, Execution::Sequential).map_err(|e| e.to_string())?;
        let pred_bytes: Vec<u8> = reloaded.iter().flat_map(|c| c.values().iter().flat_map(|v| v.to_le_bytes())).collect();
        let direct_bytes: Vec<u8> = direct.iter().flat_map(|c| c.values().iter().flat_map(|v| v.to_le_bytes())).collect();
        check(pred_bytes == direct_bytes, || "reloaded model predicts differently".into())?;
        Ok((bytes, pred_bytes))
    };
    let (model_a, pred_a) = run("a")?;
    let (model_b, pred_b) = run("b")?;
    check(pred_a == pred_b, || "predictions differ between runs".into())?;
    check(model_a == model_b, || "model files differ between runs".into())?;
    Ok(format!(
        "{}-byte model and {} prediction bytes identical across runs and reload",
        model_a.len(),
        pred_a.len()
    ))
}

fn degenerate_inputs() -> Outcome {
    let s = Arc::new(Grid::uniform(0.0, 1.0, 21).unwrap());
    let t = Arc::new(Grid::uniform(0.0, 1.0, 5).unwrap());
    let mut r = common::rng(7);
    let sample = |id: &str, r: &mut rand_chacha::ChaCha8Rng| {
        let (a, b) = (r.random_range(-1.0..1.0), r.random_range(0.5..2.0));
        Sample::new(
            id,
            vec![],
            vec![Curve::from_fn(s.clone(), |x| a + (b * x).sin()).unwrap()],
            Some(Curve::new(t.clone(), (0..5).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()),
        )
    };
    let samples: Vec<Sample> = (0..4).map(|i| sample(&format!("d{i}"), &mut r)).collect();
    for functional in [FunctionalKernel::Linear, FunctionalKernel::Gaussian { sigma: 0.7 }] {
        let kernel = KernelConfig {
            functional,
            ..KernelConfig::default()
        };
        for a in &samples {
            for b in &samples {
                let got = kappa(a, b, &kernel).map_err(|e| e.to_string())?;
                let d2 = l2_distance_sq(&a.xc[0], &b.xc[0]).unwrap();
                let want = match functional {
                    FunctionalKernel::Linear => l2_inner(&a.xc[0], &b.xc[0]).unwrap(),
                    FunctionalKernel::Gaussian { sigma } => (-d2 / (2.0 * sigma * sigma)).exp(),
                };
                check((got - want).abs() <= 1e-14 * want.abs().max(1.0), || {
                    format!("kappa {got} vs functional-only {want}")
                })?;
            }
        }
    }

    let one = TrainingSet::new(vec![samples[0].clone()]).map_err(|e| e.to_string())?;
    let kernel = KernelConfig {
        operator: OperatorKind::Identity,
        ..KernelConfig::default()
    };
    let k11 = kappa(&samples[0], &samples[0], &kernel).unwrap();
    let mut worst: f64 = 0.0;
    for lambda in [1e-3, 0.5, 10.0] {
        for solver in [SolverKind::Cholesky, SolverKind::Spectral] {
            let model = fit(&one, &FitConfig::new(lambda, kernel).with_solver(solver)).map_err(|e| e.to_string())?;
            for (l, y) in samples[0].y.as_ref().unwrap().values().iter().enumerate() {
                let want = y / (k11 + lambda);
                let err = (model.alpha()[(0, l)] - want).abs();
                worst = worst.max(err);
                check(err <= 1e-12, || format!("λ={lambda}: α={} vs {want}", model.alpha()[(0, l)]))?;
            }
        }
    }
    Ok(format!("k=0, p=1 kappa exact; identity closed form max error {worst:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 7] = [
        ("1 oracle equivalence", oracle_equivalence, Some(Duration::from_secs(30))),
        ("2 operator-kernel positivity", operator_positivity, Some(Duration::from_secs(10))),
        ("3 linear-model recovery", linear_model_recovery, Some(Duration::from_secs(120))),
        ("4 interpolation limit", interpolation_limit, None),
        ("5 quadrature accuracy", quadrature_accuracy, None),
        ("6 determinism and persistence", determinism_and_persistence, None),
        ("7 degenerate inputs", degenerate_inputs, None),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(detail), Some(limit)) if elapsed > limit => {
                Err(format!("{detail}; took {elapsed:.1?}, budget {limit:?}"))
            }
            (other, _) => other,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} ({elapsed:.2?})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} ({elapsed:.2?})");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
