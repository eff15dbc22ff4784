use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use funkernel::data::{
    center_responses, evaluate, format_number, generate_synthetic, load_dataset, load_model, load_prediction_set,
    read_responses, save_model, write_covariates, write_discrete, write_responses,
};
use funkernel::estimator::{cross_validate_with, fit_with};
use funkernel::{predict_many, Execution, FittedModel, TrainingSet};
use serde::Serialize;

use crate::config::{report_path, RunConfig};
use crate::{CliError, Common};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn setup(args: &Common) -> Result<(RunConfig, Execution), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    #[cfg(feature = "parallel")]
    if args.threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global();
    }
    let exec = if args.threads == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    if args.verbose {
        eprintln!("config: {}", args.config.display());
        eprintln!("execution: {exec:?}");
    }
    Ok((cfg, exec))
}

fn training_set(cfg: &RunConfig) -> Result<(TrainingSet, Option<Vec<f64>>), CliError> {
    let ts = load_dataset(cfg.data()?)?.into_training_set()?;
    if cfg.center {
        let (centered, mean) = center_responses(&ts)?;
        Ok((centered, Some(mean)))
    } else {
        Ok((ts, None))
    }
}

pub fn synth(args: &Common) -> Result<(), CliError> {
    let (cfg, _) = setup(args)?;
    let mut spec = cfg
        .synth
        .clone()
        .ok_or_else(|| CliError::Config("config has no synth section".into()))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let dir = cfg.output(args.out.as_deref(), cfg.out.as_ref(), "output directory")?;
    let data = generate_synthetic(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    if !dir.is_dir() {
        return Err(CliError::Io(format!("output directory {} does not exist", dir.display())));
    }

    let ts = &data.training;
    let ids = data.ids();
    let responses: Vec<_> = ts.samples().iter().map(|s| s.y.clone().expect("generated with responses")).collect();
    write_covariates(&dir.join("covariates.csv"), ts.samples(), &ts.layout().variables)?;
    write_discrete(&dir.join("discrete.csv"), &ids, &data.discrete_columns, &data.discrete_labels)?;
    write_responses(&dir.join("response.csv"), &ids, &responses)?;
    write_responses(&dir.join("truth.csv"), &ids, &data.truth)?;
    eprintln!(
        "wrote {} samples (p={}, k={}, m={}) to {}",
        ts.n(),
        ts.p(),
        ts.k(),
        ts.m(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    model: String,
    n: usize,
    m: usize,
    p: usize,
    k: usize,
    lambda: f64,
    solver: &'a str,
    residual_norm: f64,
    relative_residual: f64,
    iterations: usize,
    jitter: f64,
    centered: bool,
    wall_seconds: f64,
}

pub fn fit(args: &Common) -> Result<(), CliError> {
    let started = Instant::now();
    let (cfg, exec) = setup(args)?;
    let fc = cfg.fit_config()?;
    let out = cfg.output(args.out.as_deref(), cfg.model.as_ref(), "model")?;
    let (ts, mean) = training_set(&cfg)?;
    let mut model: FittedModel = fit_with(&ts, &fc, exec)?;
    if let Some(mean) = mean {
        model = model.with_response_offset(mean)?;
    }
    save_model(&model, &out)?;

    let d = &model.diagnostics().solve;
    let report = FitReport {
        model: out.display().to_string(),
        n: ts.n(),
        m: ts.m(),
        p: ts.p(),
        k: ts.k(),
        lambda: fc.lambda,
        solver: &d.solver,
        residual_norm: d.residual_norm,
        relative_residual: d.relative_residual,
        iterations: d.iterations,
        jitter: d.jitter,
        centered: cfg.center,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&report_path(&out), &report)?;
    eprintln!(
        "fit n={} m={} p={} k={} lambda={} solver={} residual={:.3e} (relative {:.3e}) in {:.3}s",
        report.n,
        report.m,
        report.p,
        report.k,
        report.lambda,
        report.solver,
        report.residual_norm,
        report.relative_residual,
        report.wall_seconds
    );
    eprintln!("model written to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct CvReport<'a> {
    best: &'a funkernel::FitConfig,
    mean_ise: f64,
    folds: usize,
    seed: u64,
    centered: bool,
    candidates: Vec<&'a funkernel::estimator::CvScore>,
}

pub fn cv(args: &Common) -> Result<(), CliError> {
    let (cfg, exec) = setup(args)?;
    let grid = cfg.cv_grid()?;
    let first = *grid
        .lambdas
        .first()
        .ok_or_else(|| CliError::Config("lambda_grid is empty".into()))?;
    let base = cfg.base_config(first)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let out = cfg.output(args.out.as_deref(), cfg.out.as_ref(), "score table")?;
    let (ts, _) = training_set(&cfg)?;
    let outcome = cross_validate_with(&ts, &base, &grid, cfg.folds, seed, exec)?;

    let best = &outcome.scores[outcome.best_index];
    let mut table = String::from("fold,lambda,sigma_d,sigma_c,sigma_y,ise,chosen\n");
    for (idx, row) in outcome.rows.iter().enumerate() {
        let chosen = idx / cfg.folds == outcome.best_index;
        table.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.fold,
            format_number(row.lambda),
            format_number(row.sigma_d),
            row.sigma_c.map(format_number).unwrap_or_default(),
            format_number(row.sigma_y),
            format_number(row.ise),
            chosen
        ));
    }
    fs::File::create(&out)
        .and_then(|mut f| f.write_all(table.as_bytes()))
        .map_err(|e| io_err(&out, e))?;
    let report = CvReport {
        best: &outcome.best,
        mean_ise: best.mean_ise,
        folds: cfg.folds,
        seed,
        centered: cfg.center,
        candidates: outcome.scores.iter().collect(),
    };
    write_json(&report_path(&out), &report)?;

    if args.verbose {
        for s in &outcome.scores {
            eprintln!(
                "lambda={} sigma_d={} sigma_c={:?} sigma_y={} mean_ise={:.6e}",
                s.config.lambda,
                s.config.kernel.sigma_d(),
                s.config.kernel.sigma_c(),
                s.config.kernel.sigma_y(),
                s.mean_ise
            );
        }
    }
    eprintln!(
        "best of {} candidates over {} folds: lambda={} sigma_d={} sigma_c={:?} sigma_y={} mean ISE {:.6e}",
        outcome.scores.len(),
        cfg.folds,
        outcome.best.lambda,
        outcome.best.kernel.sigma_d(),
        outcome.best.kernel.sigma_c(),
        outcome.best.kernel.sigma_y(),
        best.mean_ise
    );
    Ok(())
}

pub fn predict(args: &Common) -> Result<(), CliError> {
    let (cfg, exec) = setup(args)?;
    let model_path = cfg
        .model
        .clone()
        .ok_or_else(|| CliError::Config("config has no model path".into()))?;
    let out = cfg.output(args.out.as_deref(), cfg.predictions.as_ref(), "predictions")?;
    let model = load_model(&model_path)?;
    let x = load_prediction_set(cfg.data()?, model.layout())?;
    let preds = predict_many(&model, &x.samples, exec)?;
    let ids: Vec<String> = x.samples.iter().map(|s| s.id.clone()).collect();
    write_responses(&out, &ids, &preds)?;
    eprintln!(
        "predicted {} curves on {} t points to {}",
        preds.len(),
        model.m(),
        out.display()
    );
    Ok(())
}

pub fn eval(args: &Common) -> Result<(), CliError> {
    let (cfg, _) = setup(args)?;
    let pred_path = cfg
        .predictions
        .clone()
        .ok_or_else(|| CliError::Config("config has no predictions path".into()))?;
    let truth_path = cfg
        .truth
        .clone()
        .ok_or_else(|| CliError::Config("config has no truth path".into()))?;
    let out = cfg.output(args.out.as_deref(), cfg.metrics.as_ref(), "metrics report")?;

    let (pred_ids, preds) = read_responses(&pred_path)?;
    let (truth_ids, truth) = read_responses(&truth_path)?;
    let by_id: HashMap<&str, usize> = truth_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut matched = Vec::with_capacity(preds.len());
    for id in &pred_ids {
        let i = by_id
            .get(id.as_str())
            .ok_or_else(|| CliError::Data(format!("sample {id} has no reference curve")))?;
        matched.push(truth[*i].clone());
    }
    let grid = preds
        .first()
        .map(|c| c.grid().clone())
        .ok_or_else(|| CliError::Data(format!("{} holds no predictions", pred_path.display())))?;
    let metrics = evaluate(&preds, &matched, &grid)?;
    write_json(&out, &metrics)?;

    if let Some(plot) = &cfg.plot {
        let mut text = String::from("t,mse\n");
        for (t, mse) in grid.points().iter().zip(&metrics.per_t_mse) {
            text.push_str(&format!("{},{}\n", format_number(*t), format_number(*mse)));
        }
        fs::write(plot, text).map_err(|e| io_err(plot, e))?;
    }
    eprintln!(
        "{} curves: mean ISE {:.6e}, root mean ISE {:.6e}",
        metrics.count, metrics.mean_ise, metrics.root_mean_ise
    );
    Ok(())
}
