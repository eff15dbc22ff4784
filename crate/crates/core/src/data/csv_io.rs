//! Long-format CSV files for functional covariates and responses, and a wide
//! file for discrete covariates.
//!
//! ```text
//! covariates: sample_id,variable,s,value   (sorted by variable, sample_id, s)
//! discrete:   sample_id,<col1>,<col2>,...
//! responses:  sample_id,t,value
//! ```
//!
//! Numbers are written with 17 significant digits so binary64 values survive
//! a round trip exactly.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Curve, Grid};
use crate::sample::{ColumnKind, CovariateLayout, DiscreteColumn, DiscreteSchema, Sample, TrainingSet};

pub const COVARIATE_HEADER: [&str; 4] = ["sample_id", "variable", "s", "value"];
pub const RESPONSE_HEADER: [&str; 3] = ["sample_id", "t", "value"];

/// Paths making up one dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub covariates: PathBuf,
    #[serde(default)]
    pub discrete: Option<PathBuf>,
    #[serde(default)]
    pub response: Option<PathBuf>,
    /// Discrete columns to one-hot encode; the rest are numeric.
    #[serde(default)]
    pub categorical: Vec<String>,
}

/// Parsed, validated samples (responses present only if a response file was
/// given) with their covariate layout.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub layout: CovariateLayout,
    pub t_grid: Option<Arc<Grid>>,
}

impl Dataset {
    pub fn into_training_set(self) -> Result<TrainingSet> {
        if self.t_grid.is_none() {
            return Err(Error::Data("dataset has no responses".into()));
        }
        TrainingSet::new(self.samples)?.with_layout(self.layout)
    }
}

pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file))
}

/// Rows of a CSV file as string records, header first. Row numbers in errors
/// are 1-based file lines.
fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut reader = open_reader(path)?;
    let mut out = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: idx + 1,
            column: String::new(),
            message: format!("{}: {e}", path.display()),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn expect_header(path: &Path, header: Option<&csv::StringRecord>, want: &[&str]) -> Result<()> {
    let got: Vec<&str> = header.map(|h| h.iter().map(str::trim).collect()).unwrap_or_default();
    if got != want {
        return Err(Error::Parse {
            row: 1,
            column: String::new(),
            message: format!("{}: expected header {:?}, found {:?}", path.display(), want.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn cell<'a>(rec: &'a csv::StringRecord, row: usize, col: usize, name: &str) -> Result<&'a str> {
    rec.get(col).map(str::trim).ok_or_else(|| Error::Parse {
        row,
        column: name.into(),
        message: format!("missing field (row has {} fields)", rec.len()),
    })
}

fn number(rec: &csv::StringRecord, row: usize, col: usize, name: &str) -> Result<f64> {
    let raw = cell(rec, row, col, name)?;
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        row,
        column: name.into(),
        message: format!("{raw:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: name.into(),
            message: format!("{raw:?} is not finite"),
        });
    }
    Ok(v)
}

/// Groups `(id, coordinate, value)` rows per sample, preserving first-seen
/// order of ids.
#[derive(Default)]
struct LongTable {
    order: Vec<String>,
    rows: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl LongTable {
    fn push(&mut self, id: &str, x: f64, v: f64) {
        let entry = self.rows.entry(id.to_string()).or_insert_with(|| {
            self.order.push(id.to_string());
            (Vec::new(), Vec::new())
        });
        entry.0.push(x);
        entry.1.push(v);
    }

    /// One shared grid across all samples; `what` names the variable in errors.
    fn shared_grid(&self, what: &str) -> Result<Arc<Grid>> {
        let first = &self.order[0];
        let grid = Arc::new(
            Grid::new(self.rows[first].0.clone())
                .map_err(|e| Error::Data(format!("{what}, sample {first}: {e}")))?,
        );
        for id in &self.order[1..] {
            let pts = &self.rows[id].0;
            if pts.as_slice() != grid.points() {
                let l = pts
                    .iter()
                    .zip(grid.points())
                    .position(|(a, b)| a != b)
                    .unwrap_or_else(|| pts.len().min(grid.len()));
                let coord = pts.get(l).map_or("<missing>".to_string(), |v| v.to_string());
                return Err(Error::IncompatibleGrids(format!(
                    "{what}: sample {id} differs from sample {first} at index {l} (coordinate {coord})"
                )));
            }
        }
        Ok(grid)
    }

    fn curve(&self, id: &str, grid: &Arc<Grid>) -> Result<Curve> {
        Curve::new(grid.clone(), self.rows[id].1.clone())
    }
}

struct FunctionalTable {
    variables: Vec<String>,
    tables: Vec<LongTable>,
}

fn read_functional(path: &Path) -> Result<FunctionalTable> {
    let records = read_records(path)?;
    if records.is_empty() {
        return Ok(FunctionalTable {
            variables: Vec::new(),
            tables: Vec::new(),
        });
    }
    expect_header(path, records.first(), &COVARIATE_HEADER)?;
    let mut variables: Vec<String> = Vec::new();
    let mut tables: Vec<LongTable> = Vec::new();
    for (idx, rec) in records.iter().enumerate().skip(1) {
        let row = idx + 1;
        let id = cell(rec, row, 0, "sample_id")?;
        if id.is_empty() {
            return Err(Error::Parse {
                row,
                column: "sample_id".into(),
                message: "empty sample id".into(),
            });
        }
        let var = cell(rec, row, 1, "variable")?;
        let s = number(rec, row, 2, "s")?;
        let v = number(rec, row, 3, "value")?;
        let q = match variables.iter().position(|x| x == var) {
            Some(q) => q,
            None => {
                variables.push(var.to_string());
                tables.push(LongTable::default());
                variables.len() - 1
            }
        };
        tables[q].push(id, s, v);
    }
    Ok(FunctionalTable { variables, tables })
}

struct DiscreteTable {
    columns: Vec<String>,
    rows: HashMap<String, Vec<String>>,
    order: Vec<String>,
}

fn read_discrete(path: &Path) -> Result<DiscreteTable> {
    let records = read_records(path)?;
    let header = records.first().ok_or_else(|| Error::Parse {
        row: 1,
        column: String::new(),
        message: format!("{}: missing header", path.display()),
    })?;
    if header.get(0).map(str::trim) != Some("sample_id") {
        return Err(Error::Parse {
            row: 1,
            column: "sample_id".into(),
            message: format!("{}: first column must be sample_id", path.display()),
        });
    }
    let columns: Vec<String> = header.iter().skip(1).map(|c| c.trim().to_string()).collect();
    let mut rows = HashMap::new();
    let mut order = Vec::new();
    for (idx, rec) in records.iter().enumerate().skip(1) {
        let row = idx + 1;
        if rec.len() != columns.len() + 1 {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", columns.len() + 1, rec.len()),
            });
        }
        let id = cell(rec, row, 0, "sample_id")?.to_string();
        let values: Vec<String> = rec.iter().skip(1).map(|c| c.trim().to_string()).collect();
        if rows.insert(id.clone(), values).is_some() {
            return Err(Error::Integrity(format!("sample_id {id} appears twice in {}", path.display())));
        }
        order.push(id);
    }
    Ok(DiscreteTable { columns, rows, order })
}

fn schema_from_table(table: &DiscreteTable, categorical: &[String]) -> Result<DiscreteSchema> {
    for c in categorical {
        if !table.columns.contains(c) {
            return Err(Error::InvalidConfig(format!(
                "categorical column {c} is not present in the discrete covariates file"
            )));
        }
    }
    let columns = table
        .columns
        .iter()
        .enumerate()
        .map(|(ci, name)| {
            let kind = if categorical.contains(name) {
                let levels: BTreeSet<&str> = table.rows.values().map(|r| r[ci].as_str()).collect();
                ColumnKind::Categorical {
                    levels: levels.into_iter().map(String::from).collect(),
                }
            } else {
                ColumnKind::Numeric
            };
            DiscreteColumn { name: name.clone(), kind }
        })
        .collect();
    Ok(DiscreteSchema { columns })
}

fn check_same_ids(what: &str, expected: &[String], got: &[String]) -> Result<()> {
    let have: BTreeSet<&String> = got.iter().collect();
    if let Some(missing) = expected.iter().find(|id| !have.contains(id)) {
        return Err(Error::Integrity(format!("sample_id {missing} missing from {what}")));
    }
    let want: BTreeSet<&String> = expected.iter().collect();
    if let Some(extra) = got.iter().find(|id| !want.contains(id)) {
        return Err(Error::Integrity(format!(
            "sample_id {extra} in {what} has no functional covariates"
        )));
    }
    Ok(())
}

/// Loads a training dataset; every sample needs covariates and a response.
pub fn load_dataset(bundle: &DatasetBundle) -> Result<Dataset> {
    let ds = load_inner(bundle, None)?;
    if ds.samples.is_empty() {
        return Err(Error::Integrity(format!(
            "{} contains no samples",
            bundle.covariates.display()
        )));
    }
    Ok(ds)
}

/// Loads covariates for prediction, encoding them the way `layout` (from a
/// fitted model) prescribes. An empty covariates file yields no samples.
pub fn load_prediction_set(bundle: &DatasetBundle, layout: &CovariateLayout) -> Result<Dataset> {
    load_inner(bundle, Some(layout))
}

fn load_inner(bundle: &DatasetBundle, layout: Option<&CovariateLayout>) -> Result<Dataset> {
    let functional = read_functional(&bundle.covariates)?;
    let ids: Vec<String> = functional
        .tables
        .first()
        .map(|t| t.order.clone())
        .unwrap_or_default();

    // variable order: as in the file, or as the model expects
    let var_order: Vec<usize> = match layout {
        None => (0..functional.variables.len()).collect(),
        Some(l) if ids.is_empty() => {
            return Ok(Dataset {
                samples: Vec::new(),
                layout: l.clone(),
                t_grid: None,
            })
        }
        Some(l) => {
            let mut order = Vec::new();
            for v in &l.variables {
                let q = functional.variables.iter().position(|x| x == v).ok_or_else(|| {
                    Error::IncompatibleGrids(format!("variable {v} expected by the model is missing"))
                })?;
                order.push(q);
            }
            if let Some(extra) = functional.variables.iter().find(|v| !l.variables.contains(v)) {
                return Err(Error::IncompatibleGrids(format!("variable {extra} is unknown to the model")));
            }
            order
        }
    };

    let mut grids = Vec::new();
    for &q in &var_order {
        let name = &functional.variables[q];
        check_same_ids(&format!("variable {name}"), &ids, &functional.tables[q].order)?;
        grids.push(functional.tables[q].shared_grid(&format!("variable {name}"))?);
    }

    let (schema, discrete_rows) = match &bundle.discrete {
        None => {
            if let Some(l) = layout {
                if !l.discrete.columns.is_empty() {
                    return Err(Error::Data("the model expects discrete covariates but none were given".into()));
                }
            }
            (DiscreteSchema::default(), None)
        }
        Some(path) => {
            let table = read_discrete(path)?;
            check_same_ids(&format!("{}", path.display()), &ids, &table.order)?;
            let schema = match layout {
                None => schema_from_table(&table, &bundle.categorical)?,
                Some(l) => {
                    let names: Vec<&String> = l.discrete.columns.iter().map(|c| &c.name).collect();
                    if names.iter().map(|s| s.as_str()).ne(table.columns.iter().map(|s| s.as_str())) {
                        return Err(Error::Data(format!(
                            "discrete columns {:?} do not match the model's {:?}",
                            table.columns, names
                        )));
                    }
                    l.discrete.clone()
                }
            };
            (schema, Some(table.rows))
        }
    };

    let responses = match &bundle.response {
        None => None,
        Some(path) => {
            let records = read_records(path)?;
            expect_header(path, records.first(), &RESPONSE_HEADER)?;
            let mut table = LongTable::default();
            for (idx, rec) in records.iter().enumerate().skip(1) {
                let row = idx + 1;
                let id = cell(rec, row, 0, "sample_id")?;
                table.push(id, number(rec, row, 1, "t")?, number(rec, row, 2, "value")?);
            }
            check_same_ids(&format!("{}", path.display()), &ids, &table.order)?;
            let grid = table.shared_grid("response")?;
            Some((table, grid))
        }
    };

    let mut samples = Vec::with_capacity(ids.len());
    for id in &ids {
        let xc = var_order
            .iter()
            .zip(&grids)
            .map(|(&q, g)| functional.tables[q].curve(id, g))
            .collect::<Result<Vec<_>>>()?;
        let xd = match &discrete_rows {
            None => Vec::new(),
            Some(rows) => {
                let cells: Vec<&str> = rows[id].iter().map(String::as_str).collect();
                schema.encode(id, &cells)?
            }
        };
        let y = match &responses {
            None => None,
            Some((table, grid)) => Some(table.curve(id, grid)?),
        };
        samples.push(Sample::new(id.clone(), xd, xc, y));
    }

    let layout = CovariateLayout {
        variables: var_order.iter().map(|&q| functional.variables[q].clone()).collect(),
        discrete: schema,
    };
    Ok(Dataset {
        samples,
        layout,
        t_grid: responses.map(|(_, g)| g),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

/// Writes functional covariates sorted by (variable, sample_id, s).
pub fn write_covariates(path: &Path, samples: &[Sample], variables: &[String]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", COVARIATE_HEADER.join(","))?;
    let mut order: Vec<&Sample> = samples.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    for (q, var) in variables.iter().enumerate() {
        for s in &order {
            let curve = s.xc.get(q).ok_or_else(|| {
                Error::Dimension(format!("sample {} lacks functional covariate {var}", s.id))
            })?;
            for (x, v) in curve.grid().points().iter().zip(curve.values()) {
                writeln!(out, "{},{},{},{}", s.id, var, format_number(*x), format_number(*v))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes raw discrete cells (category labels or numbers as text).
pub fn write_discrete(path: &Path, ids: &[String], columns: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = create(path)?;
    let mut header = vec!["sample_id".to_string()];
    header.extend(columns.iter().cloned());
    writeln!(out, "{}", header.join(","))?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    for i in order {
        let mut fields = vec![ids[i].clone()];
        fields.extend(rows[i].iter().cloned());
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes response curves in input order.
pub fn write_responses(path: &Path, ids: &[String], curves: &[Curve]) -> Result<()> {
    if ids.len() != curves.len() {
        return Err(Error::Dimension(format!("{} ids for {} curves", ids.len(), curves.len())));
    }
    let mut out = create(path)?;
    writeln!(out, "{}", RESPONSE_HEADER.join(","))?;
    for (id, c) in ids.iter().zip(curves) {
        for (t, v) in c.grid().points().iter().zip(c.values()) {
            writeln!(out, "{},{},{}", id, format_number(*t), format_number(*v))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a `sample_id,t,value` file (predictions or truth) in file order.
pub fn read_responses(path: &Path) -> Result<(Vec<String>, Vec<Curve>)> {
    let records = read_records(path)?;
    expect_header(path, records.first(), &RESPONSE_HEADER)?;
    let mut table = LongTable::default();
    for (idx, rec) in records.iter().enumerate().skip(1) {
        let row = idx + 1;
        let id = cell(rec, row, 0, "sample_id")?;
        table.push(id, number(rec, row, 1, "t")?, number(rec, row, 2, "value")?);
    }
    if table.order.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let grid = table.shared_grid(&path.display().to_string())?;
    let curves = table
        .order
        .iter()
        .map(|id| table.curve(id, &grid))
        .collect::<Result<Vec<_>>>()?;
    Ok((table.order, curves))
}
