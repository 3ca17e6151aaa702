//! CSV ingestion and the fixed preprocessing pipeline: missing-row removal,
//! one-hot encoding, min–max scaling and target standardization.
//!
//! Transform parameters are always fit on training rows only and are stored in
//! a [`Schema`] so the same mapping can be replayed at inference time.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DlnError, Result};

pub const DEFAULT_TEST_FRACTION: f64 = 0.25;

const MISSING_TOKENS: [&str; 7] = ["", "?", "NA", "N/A", "NaN", "nan", "null"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Target,
}

/// Caller-supplied hints about column roles. Columns not mentioned are
/// inferred: mostly-numeric columns are continuous, anything else categorical.
#[derive(Clone, Debug, Default)]
pub struct SchemaHint {
    pub target: Option<String>,
    pub categorical: Vec<String>,
    pub continuous: Vec<String>,
    pub ignore: Vec<String>,
}

impl SchemaHint {
    pub fn with_target(target: impl Into<String>) -> Self {
        SchemaHint { target: Some(target.into()), ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

#[derive(Clone, Debug)]
pub struct RawColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, Default)]
pub struct RawTable {
    pub columns: Vec<RawColumn>,
    pub n_rows: usize,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn target_index(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.kind == ColumnKind::Target)
    }

    pub fn row_complete(&self, row: usize) -> bool {
        self.columns.iter().all(|c| !c.cells[row].is_missing())
    }

    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.n_rows).filter(|&r| self.row_complete(r)).collect()
    }

    /// Build a table directly from numeric columns; used for synthetic data.
    pub fn from_numeric(names: &[&str], rows: &[Vec<f64>], target: &str) -> Result<Self> {
        let mut columns: Vec<RawColumn> = names
            .iter()
            .map(|n| RawColumn {
                name: n.to_string(),
                kind: if *n == target { ColumnKind::Target } else { ColumnKind::Continuous },
                cells: Vec::with_capacity(rows.len()),
            })
            .collect();
        if !columns.iter().any(|c| c.kind == ColumnKind::Target) {
            return Err(DlnError::MissingColumn(target.to_string()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(DlnError::Arity { row: i + 1, expected: names.len(), found: row.len() });
            }
            for (c, v) in columns.iter_mut().zip(row) {
                c.cells.push(if v.is_finite() { Cell::Num(*v) } else { Cell::Missing });
            }
        }
        Ok(RawTable { columns, n_rows: rows.len() })
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_missing_token(s: &str) -> bool {
    let t = s.trim();
    MISSING_TOKENS.iter().any(|m| *m == t)
}

/// Read a headed CSV file into typed columns.
pub fn load_csv(path: impl AsRef<Path>, hint: &SchemaHint) -> Result<RawTable> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, hint)
}

pub fn read_csv<R: Read>(reader: R, hint: &SchemaHint) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(DlnError::Malformed("CSV header is empty".into()));
    }
    let mut text: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    let mut n_rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(DlnError::Arity { row: i + 2, expected: header.len(), found: rec.len() });
        }
        for (col, field) in text.iter_mut().zip(rec.iter()) {
            col.push(field.to_string());
        }
        n_rows += 1;
    }

    if let Some(t) = &hint.target {
        if !header.iter().any(|h| h == t) {
            return Err(DlnError::MissingColumn(t.clone()));
        }
    }
    for name in hint.categorical.iter().chain(&hint.continuous).chain(&hint.ignore) {
        if !header.iter().any(|h| h == name) {
            return Err(DlnError::MissingColumn(name.clone()));
        }
    }

    let mut columns = Vec::with_capacity(header.len());
    for (name, cells) in header.into_iter().zip(text) {
        if hint.ignore.contains(&name) {
            continue;
        }
        let kind = if hint.target.as_deref() == Some(name.as_str()) {
            ColumnKind::Target
        } else if hint.categorical.contains(&name) {
            ColumnKind::Categorical
        } else if hint.continuous.contains(&name) {
            ColumnKind::Continuous
        } else {
            infer_kind(&cells)
        };
        let cells = cells
            .into_iter()
            .map(|s| {
                if is_missing_token(&s) {
                    return Cell::Missing;
                }
                match kind {
                    ColumnKind::Categorical => Cell::Text(s.trim().to_string()),
                    _ => parse_number(&s).map(Cell::Num).unwrap_or(Cell::Missing),
                }
            })
            .collect();
        columns.push(RawColumn { name, kind, cells });
    }
    Ok(RawTable { columns, n_rows })
}

fn infer_kind(cells: &[String]) -> ColumnKind {
    let present: Vec<&String> = cells.iter().filter(|s| !is_missing_token(s)).collect();
    let non_numeric = present.iter().filter(|s| parse_number(s).is_none()).count();
    if !present.is_empty() && 2 * non_numeric > present.len() {
        ColumnKind::Categorical
    } else {
        ColumnKind::Continuous
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnTransform {
    Continuous { min: f64, max: f64 },
    Categorical { categories: Vec<String> },
    Target { mean: f64, std: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(flatten)]
    pub transform: ColumnTransform,
}

impl ColumnSchema {
    pub fn kind(&self) -> ColumnKind {
        match self.transform {
            ColumnTransform::Continuous { .. } => ColumnKind::Continuous,
            ColumnTransform::Categorical { .. } => ColumnKind::Categorical,
            ColumnTransform::Target { .. } => ColumnKind::Target,
        }
    }
}

/// Fitted preprocessing: per-column transforms plus the layout of the encoded
/// feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSchema>,
    pub feature_names: Vec<String>,
    /// encoded feature index → index into `columns`
    pub feature_origin: Vec<usize>,
}

impl Schema {
    /// Fit transforms on the given (complete) rows of `raw`.
    pub fn fit(raw: &RawTable, rows: &[usize]) -> Result<Schema> {
        if rows.is_empty() {
            return Err(DlnError::EmptyData("no training rows to fit on".into()));
        }
        let mut columns = Vec::with_capacity(raw.columns.len());
        let mut feature_names = Vec::new();
        let mut feature_origin = Vec::new();
        for col in &raw.columns {
            let transform = match col.kind {
                ColumnKind::Continuous => {
                    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                    for &r in rows {
                        if let Cell::Num(v) = col.cells[r] {
                            min = min.min(v);
                            max = max.max(v);
                        }
                    }
                    ColumnTransform::Continuous { min, max }
                }
                ColumnKind::Categorical => {
                    let mut categories: Vec<String> = rows
                        .iter()
                        .filter_map(|&r| match &col.cells[r] {
                            Cell::Text(s) => Some(s.clone()),
                            Cell::Num(v) => Some(v.to_string()),
                            Cell::Missing => None,
                        })
                        .collect();
                    categories.sort();
                    categories.dedup();
                    ColumnTransform::Categorical { categories }
                }
                ColumnKind::Target => {
                    let values: Vec<f64> = rows
                        .iter()
                        .filter_map(|&r| match col.cells[r] {
                            Cell::Num(v) => Some(v),
                            _ => None,
                        })
                        .collect();
                    let n = values.len() as f64;
                    let mean = values.iter().sum::<f64>() / n;
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let std = var.sqrt();
                    if !(std > 0.0) {
                        return Err(DlnError::ConstantTarget);
                    }
                    ColumnTransform::Target { mean, std }
                }
            };
            let ci = columns.len();
            match &transform {
                ColumnTransform::Continuous { .. } => {
                    feature_names.push(col.name.clone());
                    feature_origin.push(ci);
                }
                ColumnTransform::Categorical { categories } => {
                    for c in categories {
                        feature_names.push(format!("{}={}", col.name, c));
                        feature_origin.push(ci);
                    }
                }
                ColumnTransform::Target { .. } => {}
            }
            columns.push(ColumnSchema { name: col.name.clone(), transform });
        }
        if !columns.iter().any(|c| c.kind() == ColumnKind::Target) {
            return Err(DlnError::MissingColumn("<target>".into()));
        }
        Ok(Schema { columns, feature_names, feature_origin })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn target_column(&self) -> &ColumnSchema {
        self.columns
            .iter()
            .find(|c| c.kind() == ColumnKind::Target)
            .expect("schema always carries a target column")
    }

    /// `(mean, std)` of the training target.
    pub fn target_scale(&self) -> (f64, f64) {
        match self.target_column().transform {
            ColumnTransform::Target { mean, std } => (mean, std),
            _ => unreachable!(),
        }
    }

    pub fn is_categorical_feature(&self, feature: usize) -> bool {
        self.columns[self.feature_origin[feature]].kind() == ColumnKind::Categorical
    }

    /// Map a scaled threshold on `feature` back to original units.
    pub fn unscale_feature(&self, feature: usize, value: f64) -> f64 {
        match self.columns[self.feature_origin[feature]].transform {
            ColumnTransform::Continuous { min, max } => min + value * (max - min),
            _ => value,
        }
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        let (mean, std) = self.target_scale();
        mean + std * z
    }

    fn encode_row(&self, raw: &RawTable, lookup: &[usize], row: usize, out: &mut Vec<f64>) {
        for (col, &ri) in self.columns.iter().zip(lookup) {
            match &col.transform {
                ColumnTransform::Continuous { min, max } => {
                    let v = match raw.columns[ri].cells[row] {
                        Cell::Num(v) => v,
                        _ => unreachable!("incomplete rows are filtered before encoding"),
                    };
                    out.push(if max > min { ((v - min) / (max - min)).clamp(0.0, 1.0) } else { 0.0 });
                }
                ColumnTransform::Categorical { categories } => {
                    let label = match &raw.columns[ri].cells[row] {
                        Cell::Text(s) => s.clone(),
                        Cell::Num(v) => v.to_string(),
                        Cell::Missing => unreachable!("incomplete rows are filtered before encoding"),
                    };
                    // unseen labels encode as all zeros
                    out.extend(categories.iter().map(|c| if *c == label { 1.0 } else { 0.0 }));
                }
                ColumnTransform::Target { .. } => {}
            }
        }
    }

    /// Resolve schema columns against a raw table by name. The target column
    /// is optional when `need_target` is false.
    fn resolve(&self, raw: &RawTable, need_target: bool) -> Result<Vec<usize>> {
        self.columns
            .iter()
            .map(|c| match raw.column_index(&c.name) {
                Some(i) => Ok(i),
                None if c.kind() == ColumnKind::Target && !need_target => Ok(usize::MAX),
                None => Err(DlnError::Schema(format!("input lacks column `{}`", c.name))),
            })
            .collect()
    }

    /// Encode the given rows (features and target) of `raw`.
    pub fn transform(&self, raw: &Arc<RawTable>, rows: &[usize]) -> Result<Dataset> {
        let lookup = self.resolve(raw, true)?;
        let (mean, std) = self.target_scale();
        let ti = self
            .columns
            .iter()
            .zip(&lookup)
            .find(|(c, _)| c.kind() == ColumnKind::Target)
            .map(|(_, &i)| i)
            .expect("target resolved");
        let mut features = Vec::with_capacity(rows.len() * self.n_features());
        let mut target = Vec::with_capacity(rows.len());
        for &r in rows {
            if !self.row_complete(raw, &lookup, r) {
                return Err(DlnError::Schema(format!("row {r} has missing values")));
            }
            self.encode_row(raw, &lookup, r, &mut features);
            match raw.columns[ti].cells[r] {
                Cell::Num(v) => target.push((v - mean) / std),
                _ => unreachable!(),
            }
        }
        Ok(Dataset {
            features,
            n_features: self.n_features(),
            target,
            schema: Arc::new(self.clone()),
            source: Some(raw.clone()),
            source_rows: rows.to_vec(),
        })
    }

    /// Encode features only, for inference on tables that may lack the
    /// target. Rows with missing feature values yield `None`.
    pub fn transform_features(&self, raw: &RawTable) -> Result<Vec<Option<Vec<f64>>>> {
        let lookup = self.resolve(raw, false)?;
        Ok((0..raw.n_rows)
            .map(|r| {
                let complete = self
                    .columns
                    .iter()
                    .zip(&lookup)
                    .all(|(c, &i)| c.kind() == ColumnKind::Target || !raw.columns[i].cells[r].is_missing());
                complete.then(|| {
                    let mut v = Vec::with_capacity(self.n_features());
                    self.encode_row(raw, &lookup, r, &mut v);
                    v
                })
            })
            .collect())
    }

    /// Rows of `raw` with every schema column (target included) present.
    pub fn complete_rows(&self, raw: &RawTable) -> Result<Vec<usize>> {
        let lookup = self.resolve(raw, true)?;
        Ok((0..raw.n_rows).filter(|&r| self.row_complete(raw, &lookup, r)).collect())
    }

    /// Names of the categorical input columns.
    pub fn categorical_columns(&self) -> Vec<String> {
        self.columns.iter().filter(|c| c.kind() == ColumnKind::Categorical).map(|c| c.name.clone()).collect()
    }

    /// Name of the target column.
    pub fn target_name(&self) -> Option<&str> {
        self.columns.iter().find(|c| c.kind() == ColumnKind::Target).map(|c| c.name.as_str())
    }

    fn row_complete(&self, raw: &RawTable, lookup: &[usize], row: usize) -> bool {
        lookup.iter().all(|&i| i == usize::MAX || !raw.columns[i].cells[row].is_missing())
    }
}

/// Preprocessed rows: features in `[0,1]`, standardized target.
#[derive(Clone, Debug)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    target: Vec<f64>,
    schema: Arc<Schema>,
    source: Option<Arc<RawTable>>,
    source_rows: Vec<usize>,
}

impl Dataset {
    /// Assemble a dataset from already-encoded parts.
    pub fn from_parts(features: Vec<f64>, target: Vec<f64>, schema: Arc<Schema>) -> Result<Self> {
        let n_features = schema.n_features();
        if features.len() != target.len() * n_features {
            return Err(DlnError::Dimension(format!(
                "{} feature values for {} rows × {} features",
                features.len(),
                target.len(),
                n_features
            )));
        }
        let source_rows = (0..target.len()).collect();
        Ok(Dataset { features, n_features, target, schema, source: None, source_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn source_rows(&self) -> &[usize] {
        &self.source_rows
    }

    pub fn feature_column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows()).map(move |i| self.features[i * self.n_features + j])
    }

    /// Rows selected by index, sharing this dataset's schema.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.n_features);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Dataset {
            features,
            n_features: self.n_features,
            target: rows.iter().map(|&r| self.target[r]).collect(),
            schema: self.schema.clone(),
            source: self.source.clone(),
            source_rows: rows.iter().map(|&r| self.source_rows[r]).collect(),
        }
    }
}

/// Drop incomplete rows, fit transforms on the rows selected by `train_mask`
/// and encode every remaining row with them.
pub fn preprocess(raw: Arc<RawTable>, train_mask: &[bool]) -> Result<Dataset> {
    if train_mask.len() != raw.n_rows {
        return Err(DlnError::Dimension(format!(
            "mask has {} entries for {} rows",
            train_mask.len(),
            raw.n_rows
        )));
    }
    let complete = raw.complete_rows();
    if complete.is_empty() {
        return Err(DlnError::EmptyData("no rows left after removing missing values".into()));
    }
    let train: Vec<usize> = complete.iter().copied().filter(|&r| train_mask[r]).collect();
    if train.len() < 2 {
        return Err(DlnError::EmptyData(format!("{} training rows, need at least 2", train.len())));
    }
    let schema = Schema::fit(&raw, &train)?;
    schema.transform(&raw, &complete)
}

/// Shuffle the dataset's complete source rows and refit preprocessing on the
/// training part. Returns `(train, test)`.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DlnError::InvalidSplit(format!("test fraction {test_fraction} not in (0,1)")));
    }
    let raw = dataset
        .source
        .clone()
        .ok_or_else(|| DlnError::InvalidSplit("dataset has no raw source to refit on".into()))?;
    let mut rows = dataset.source_rows.clone();
    let n = rows.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(DlnError::InvalidSplit(format!("{n} rows cannot be split with fraction {test_fraction}")));
    }
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test_rows, train_rows) = rows.split_at(n_test);
    let schema = Schema::fit(&raw, train_rows)?;
    Ok((schema.transform(&raw, train_rows)?, schema.transform(&raw, test_rows)?))
}

/// Load, clean and split a CSV in one step.
pub fn load_and_split(
    path: impl AsRef<Path>,
    hint: &SchemaHint,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let raw = Arc::new(load_csv(path, hint)?);
    let all = preprocess(raw.clone(), &vec![true; raw.n_rows])?;
    split(&all, test_fraction, seed)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn validation_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&r| self.assignments[r] == fold).collect()
    }

    pub fn training_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&r| self.assignments[r] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Smaller datasets get more folds.
pub fn default_fold_count(n_rows: usize) -> usize {
    match n_rows {
        0..=999 => 4,
        1000..=5000 => 3,
        _ => 2,
    }
}

pub fn make_folds(dataset: &Dataset, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    fold_plan(dataset.n_rows(), n_folds, seed)
}

pub fn fold_plan(n_rows: usize, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if !(2..=4).contains(&n_folds) {
        return Err(DlnError::FoldCount(n_folds));
    }
    if n_rows < n_folds {
        return Err(DlnError::InvalidSplit(format!("{n_rows} rows for {n_folds} folds")));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n_rows];
    for (pos, &r) in order.iter().enumerate() {
        assignments[r] = pos % n_folds;
    }
    Ok(FoldPlan { n_folds, assignments, seed })
}

/// Column lookup helper for callers that address features by name.
pub fn feature_index(schema: &Schema) -> HashMap<&str, usize> {
    schema.feature_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
}
