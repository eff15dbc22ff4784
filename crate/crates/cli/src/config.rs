//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use funkernel::data::{DatasetBundle, SyntheticConfig};
use funkernel::{CvGrid, FitConfig, KernelConfig, SolverKind};
use serde::Deserialize;

use crate::CliError;

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma_d_grid: Vec<f64>,
    #[serde(default)]
    pub sigma_c_grid: Vec<f64>,
    #[serde(default)]
    pub sigma_y_grid: Vec<f64>,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub jitter: Option<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Subtract the mean response curve before fitting.
    #[serde(default)]
    pub center: bool,
    /// Training data for `fit`/`cv`, covariates for `predict`.
    #[serde(default)]
    pub data: Option<DatasetBundle>,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SyntheticConfig>,
    #[serde(default)]
    pub predictions: Option<PathBuf>,
    #[serde(default)]
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Metrics JSON written by `eval`.
    #[serde(default)]
    pub metrics: Option<PathBuf>,
    /// `t,mse` curve written by `eval`.
    #[serde(default)]
    pub plot: Option<PathBuf>,
}

impl RunConfig {
    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        if let Some(d) = &mut self.data {
            fix(&mut d.covariates);
            fix_opt(&mut d.discrete);
            fix_opt(&mut d.response);
        }
        fix_opt(&mut self.model);
        fix_opt(&mut self.predictions);
        fix_opt(&mut self.truth);
        fix_opt(&mut self.out);
        fix_opt(&mut self.metrics);
        fix_opt(&mut self.plot);
    }

    pub fn check_lambda_choice(&self) -> Result<(), CliError> {
        match (&self.lambda, &self.lambda_grid) {
            (Some(_), Some(_)) => Err(CliError::Config("give either lambda or lambda_grid, not both".into())),
            (None, None) => Err(CliError::Config("one of lambda or lambda_grid is required".into())),
            _ => Ok(()),
        }
    }

    pub fn fit_config(&self) -> Result<FitConfig, CliError> {
        self.check_lambda_choice()?;
        let lambda = self
            .lambda
            .ok_or_else(|| CliError::Config("fit needs a single lambda; lambda_grid is for cv".into()))?;
        self.base_config(lambda)
    }

    pub fn base_config(&self, lambda: f64) -> Result<FitConfig, CliError> {
        let mut cfg = FitConfig::new(lambda, self.kernel).with_solver(self.solver);
        if let Some(j) = self.jitter {
            cfg.jitter = j;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cv_grid(&self) -> Result<CvGrid, CliError> {
        self.check_lambda_choice()?;
        let lambdas = match (&self.lambda, &self.lambda_grid) {
            (Some(l), None) => vec![*l],
            (None, Some(g)) => g.clone(),
            _ => unreachable!("checked above"),
        };
        Ok(CvGrid {
            lambdas,
            sigma_d: self.sigma_d_grid.clone(),
            sigma_c: self.sigma_c_grid.clone(),
            sigma_y: self.sigma_y_grid.clone(),
        })
    }

    pub fn data(&self) -> Result<&DatasetBundle, CliError> {
        let d = self
            .data
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no data section".into()))?;
        if d.covariates.as_os_str().is_empty() {
            return Err(CliError::Config("data.covariates path is empty".into()));
        }
        Ok(d)
    }

    /// `--out` if given, else the named config field.
    pub fn output(&self, flag: Option<&Path>, field: Option<&PathBuf>, what: &str) -> Result<PathBuf, CliError> {
        flag.map(Path::to_path_buf)
            .or_else(|| field.cloned())
            .filter(|p| !p.as_os_str().is_empty())
            .ok_or_else(|| CliError::Config(format!("no {what} path: pass --out or set it in the config")))
    }
}

/// Machine-readable report next to an output file: its extension replaced by
/// `report.json`.
pub fn report_path(out: &Path) -> PathBuf {
    out.with_extension("report.json")
}
