//! Tabular ingestion: CSV files become a column-major, z-scored numeric
//! matrix with the target column held out.
//!
//! The target is stored alongside the features but only the downstream
//! harness reads it; every other stage works on [`DataTable::columns`].

use std::collections::HashSet;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("target column `{0}` not found")]
    MissingTarget(String),
    #[error("no usable rows remain after cleaning ({dropped} dropped)")]
    EmptyAfterCleaning { dropped: usize },
    #[error("duplicate column name `{0}`")]
    DuplicateColumnName(String),
    #[error("column `{0}` is not numeric; encode categorical columns before loading")]
    NonNumericColumn(String),
    #[error("table has no feature columns")]
    NoFeatures,
    #[error("need at least {needed} rows, have {have}")]
    TooFewRows { needed: usize, have: usize },
    #[error("column length mismatch: expected {expected}, got {got}")]
    RaggedColumns { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Classification,
    Regression,
}

impl TaskKind {
    pub fn from_flag(s: &str) -> Option<Self> {
        match s {
            "c" | "classification" => Some(TaskKind::Classification),
            "r" | "regression" => Some(TaskKind::Regression),
            _ => None,
        }
    }

    pub fn flag(self) -> &'static str {
        match self {
            TaskKind::Classification => "c",
            TaskKind::Regression => "r",
        }
    }
}

/// Original dataset: z-scored feature columns plus the held-out target.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    columns: Vec<Vec<f64>>,
    column_names: Vec<String>,
    target: Vec<f64>,
    task: TaskKind,
    dataset_id: String,
    dropped_rows: usize,
}

impl DataTable {
    /// Builds a table from raw columns. Columns are z-scored with population
    /// statistics; zero-variance columns are only centered.
    pub fn from_columns(
        dataset_id: impl Into<String>,
        column_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        target: Vec<f64>,
        task: TaskKind,
    ) -> Result<Self, TableError> {
        if columns.is_empty() {
            return Err(TableError::NoFeatures);
        }
        let n = target.len();
        for c in &columns {
            if c.len() != n {
                return Err(TableError::RaggedColumns {
                    expected: n,
                    got: c.len(),
                });
            }
        }
        if n < 2 {
            return Err(TableError::TooFewRows { needed: 2, have: n });
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(TableError::DuplicateColumnName(name.clone()));
            }
        }
        let columns = columns.into_iter().map(zscore).collect();
        Ok(DataTable {
            columns,
            column_names,
            target,
            task,
            dataset_id: dataset_id.into(),
            dropped_rows: 0,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    /// Rows rejected during ingestion because a cell was unparseable or non-finite.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    /// Held-out labels. Only the downstream evaluation harness reads these.
    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn subsample_rows(&self, max_rows: usize, seed: u64) -> RowSample {
        RowSample::draw(self.n_rows(), max_rows, seed)
    }
}

fn zscore(mut col: Vec<f64>) -> Vec<f64> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 1e-12 {
        col.iter_mut().for_each(|v| *v = (*v - mean) / std);
    } else {
        col.iter_mut().for_each(|v| *v -= mean);
    }
    col
}

/// Loads a headered CSV, holding out `target_column`.
///
/// Rows where any feature cell fails to parse or is non-finite are dropped
/// and counted. A feature column with no parseable cell at all is treated as
/// categorical and rejected. Classification targets that are not numeric are
/// label-encoded in lexicographic order.
pub fn load_csv(path: &Path, target_column: &str, task: TaskKind) -> Result<DataTable, TableError> {
    let bytes = std::fs::read(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let dataset_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    parse_csv(&bytes, &dataset_id, target_column, task)
}

pub fn parse_csv(
    bytes: &[u8],
    dataset_id: &str,
    target_column: &str,
    task: TaskKind,
) -> Result<DataTable, TableError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(TableError::DuplicateColumnName(h.clone()));
        }
    }
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| TableError::MissingTarget(target_column.to_string()))?;
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != target_idx).collect();
    if feature_idx.is_empty() {
        return Err(TableError::NoFeatures);
    }

    let records: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;

    for &j in &feature_idx {
        let any_numeric = records
            .iter()
            .any(|r| r.get(j).and_then(|c| c.parse::<f64>().ok()).is_some());
        if !records.is_empty() && !any_numeric {
            return Err(TableError::NonNumericColumn(headers[j].clone()));
        }
    }

    let numeric_target = task == TaskKind::Regression
        || records
            .iter()
            .all(|r| r.get(target_idx).is_none_or(|c| c.parse::<f64>().is_ok()));
    let labels: Vec<String> = if numeric_target {
        Vec::new()
    } else {
        let mut l: Vec<String> = records
            .iter()
            .filter_map(|r| r.get(target_idx))
            .filter(|c| !c.is_empty())
            .map(str::to_string)
            .collect();
        l.sort();
        l.dedup();
        l
    };

    let mut columns = vec![Vec::with_capacity(records.len()); feature_idx.len()];
    let mut target = Vec::with_capacity(records.len());
    let mut dropped = 0usize;
    let mut row = vec![0.0; feature_idx.len()];
    'rows: for rec in &records {
        for (slot, &j) in feature_idx.iter().enumerate() {
            match rec.get(j).and_then(|c| c.parse::<f64>().ok()) {
                Some(v) if v.is_finite() => row[slot] = v,
                _ => {
                    dropped += 1;
                    continue 'rows;
                }
            }
        }
        let cell = rec.get(target_idx).unwrap_or("");
        let y = if numeric_target {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    dropped += 1;
                    continue 'rows;
                }
            }
        } else {
            match labels.binary_search_by(|l| l.as_str().cmp(cell)) {
                Ok(k) => k as f64,
                Err(_) => {
                    dropped += 1;
                    continue 'rows;
                }
            }
        };
        for (slot, col) in columns.iter_mut().enumerate() {
            col.push(row[slot]);
        }
        target.push(y);
    }
    if target.is_empty() {
        return Err(TableError::EmptyAfterCleaning { dropped });
    }
    let names = feature_idx.iter().map(|&j| headers[j].clone()).collect();
    let mut table = DataTable::from_columns(dataset_id, names, columns, target, task)?;
    table.dropped_rows = dropped;
    if dropped > 0 {
        log::warn!("stage=load dataset={dataset_id} dropped_rows={dropped}");
    }
    Ok(table)
}

/// Sorted, distinct row indices drawn deterministically from a seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowSample {
    pub indices: Vec<usize>,
    pub seed: u64,
}

impl RowSample {
    pub fn draw(n: usize, max_rows: usize, seed: u64) -> RowSample {
        let indices = if n <= max_rows {
            (0..n).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = index::sample(&mut rng, n, max_rows).into_vec();
            idx.sort_unstable();
            idx
        };
        RowSample { indices, seed }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub type Fold = (Vec<usize>, Vec<usize>);

/// Shuffled k-fold partition of `0..n`; returns (train, test) index pairs,
/// each sorted ascending.
pub fn train_test_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<Fold>, TableError> {
    if folds < 2 || n < folds {
        return Err(TableError::TooFewRows {
            needed: folds.max(2),
            have: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % folds;
    }
    Ok((0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&r| assignment[r] == f);
            (train, test)
        })
        .collect())
}
