//! Downstream verification: a k-nearest-neighbor model, classification and
//! regression metrics, cross-validated original-vs-transformed comparison
//! and the per-feature importance report.

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::expr::render_infix;
use crate::tabular::{train_test_folds, DataTable, TableError, TaskKind};
use crate::utility::{feature_importance, FeatureMatrix, UtilityConfig};

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("transformed set has {got} rows, dataset has {expected}")]
    RowMismatch { expected: usize, got: usize },
    #[error("fold construction failed: {0}")]
    Folds(String),
}

impl From<TableError> for HarnessError {
    fn from(e: TableError) -> Self {
        HarnessError::Folds(e.to_string())
    }
}

pub const DEFAULT_K: usize = 5;

/// Column-wise train statistics used to standardize both train and test.
fn standardize(train: &[Vec<f64>], test: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut tr = Vec::with_capacity(train.len());
    let mut te = Vec::with_capacity(test.len());
    for (a, b) in train.iter().zip(test) {
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let sd = (a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        let sd = if sd > 1e-12 && sd.is_finite() { sd } else { 1.0 };
        tr.push(a.iter().map(|v| (v - mean) / sd).collect());
        te.push(b.iter().map(|v| (v - mean) / sd).collect());
    }
    (tr, te)
}

/// k-nearest-neighbor prediction with Euclidean distance on columns
/// standardized by train statistics. Inputs are column-major. Distance ties
/// go to the lower train index; vote ties go to the smallest label.
pub fn knn_predict(
    train: &[Vec<f64>],
    train_y: &[f64],
    test: &[Vec<f64>],
    k: usize,
    task: TaskKind,
) -> Result<Vec<f64>, HarnessError> {
    let n_train = train_y.len();
    if n_train == 0 {
        return Err(HarnessError::EmptyTrain);
    }
    if train.len() != test.len() {
        return Err(HarnessError::LengthMismatch(train.len(), test.len()));
    }
    if let Some(c) = train.iter().find(|c| c.len() != n_train) {
        return Err(HarnessError::LengthMismatch(c.len(), n_train));
    }
    let n_test = test.first().map_or(0, Vec::len);
    let k = k.clamp(1, n_train);
    let (tr, te) = standardize(train, test);
    Ok((0..n_test)
        .into_par_iter()
        .map(|t| {
            let mut dist: Vec<(f64, usize)> = (0..n_train)
                .map(|i| {
                    let d: f64 = tr.iter().zip(&te).map(|(a, b)| (a[i] - b[t]) * (a[i] - b[t])).sum();
                    (d, i)
                })
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let near = &dist[..k];
            match task {
                TaskKind::Regression => near.iter().map(|&(_, i)| train_y[i]).sum::<f64>() / k as f64,
                TaskKind::Classification => {
                    let mut labels: Vec<f64> = near.iter().map(|&(_, i)| train_y[i]).collect();
                    labels.sort_by(f64::total_cmp);
                    let (mut best, mut best_n) = (labels[0], 0);
                    let mut i = 0;
                    while i < labels.len() {
                        let j = labels[i..].iter().take_while(|&&l| l == labels[i]).count();
                        if j > best_n {
                            best = labels[i];
                            best_n = j;
                        }
                        i += j;
                    }
                    best
                }
            }
        })
        .collect())
}

/// Unweighted mean of per-class F1 over classes present in either vector.
pub fn f1_macro(y_true: &[f64], y_pred: &[f64]) -> Result<f64, HarnessError> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(HarnessError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let mut classes: Vec<f64> = y_true.iter().chain(y_pred).copied().collect();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    let mut total = 0.0;
    for &c in &classes {
        let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fneg += 1.0,
                _ => {}
            }
        }
        total += 2.0 * tp / (2.0 * tp + fp + fneg);
    }
    Ok(total / classes.len() as f64)
}

/// `1 - sum|y - yhat| / sum|y - mean(y)|`; for constant truth, 1 when the
/// predictions are exact and 0 otherwise.
pub fn one_minus_rae(y_true: &[f64], y_pred: &[f64]) -> Result<f64, HarnessError> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(HarnessError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let err: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p).abs()).sum();
    let base: f64 = y_true.iter().map(|t| (t - mean).abs()).sum();
    if base == 0.0 {
        return Ok(if err == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(1.0 - err / base)
}

pub fn metric_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Classification => "f1_macro",
        TaskKind::Regression => "1-rae",
    }
}

fn score(task: TaskKind, truth: &[f64], pred: &[f64]) -> Result<f64, HarnessError> {
    match task {
        TaskKind::Classification => f1_macro(truth, pred),
        TaskKind::Regression => one_minus_rae(truth, pred),
    }
}

/// Cross-validated downstream score of one feature set.
pub fn cv_scores(
    columns: &[Vec<f64>],
    target: &[f64],
    task: TaskKind,
    folds: &[(Vec<usize>, Vec<usize>)],
    k: usize,
) -> Result<Vec<f64>, HarnessError> {
    folds
        .iter()
        .map(|(train, test)| {
            let pick = |rows: &[usize]| -> Vec<Vec<f64>> {
                columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect()
            };
            let ytr: Vec<f64> = train.iter().map(|&r| target[r]).collect();
            let yte: Vec<f64> = test.iter().map(|&r| target[r]).collect();
            let pred = knn_predict(&pick(train), &ytr, &pick(test), k, task)?;
            score(task, &yte, &pred)
        })
        .collect()
}

pub fn fold_hash(folds: &[(Vec<usize>, Vec<usize>)]) -> String {
    let mut h = Sha256::new();
    for (f, (_, test)) in folds.iter().enumerate() {
        h.update((f as u64).to_le_bytes());
        for &r in test {
            h.update((r as u64).to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metric: String,
    pub original: f64,
    pub transformed: f64,
    pub original_folds: Vec<f64>,
    pub transformed_folds: Vec<f64>,
    pub seed: u64,
    pub variant: String,
    pub fold_hash: String,
}

impl EvalReport {
    pub fn improved(&self) -> bool {
        self.transformed > self.original
    }

    /// Tab-separated per-fold table.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("fold\toriginal\ttransformed\n");
        for (i, (a, b)) in self.original_folds.iter().zip(&self.transformed_folds).enumerate() {
            out.push_str(&format!("{i}\t{a:.6}\t{b:.6}\n"));
        }
        out.push_str(&format!("mean\t{:.6}\t{:.6}\n", self.original, self.transformed));
        out
    }

    /// `key=value` summary lines.
    pub fn to_summary(&self) -> String {
        format!(
            "metric={}\noriginal={:?}\ntransformed={:?}\nfolds={}\nseed={}\nvariant={}\nfold_hash={}\n",
            self.metric,
            self.original,
            self.transformed,
            self.original_folds.len(),
            self.seed,
            self.variant,
            self.fold_hash
        )
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Scores original and transformed features on identical folds.
pub fn compare(
    table: &DataTable,
    transformed: &FeatureMatrix,
    folds: usize,
    seed: u64,
    k: usize,
    variant: &str,
) -> Result<EvalReport, HarnessError> {
    if transformed.n_rows() != table.n_rows() {
        return Err(HarnessError::RowMismatch {
            expected: table.n_rows(),
            got: transformed.n_rows(),
        });
    }
    let split = train_test_folds(table.n_rows(), folds, seed)?;
    let task = table.task();
    let original_folds = cv_scores(table.columns(), table.target(), task, &split, k)?;
    let transformed_folds = cv_scores(transformed.columns(), table.target(), task, &split, k)?;
    Ok(EvalReport {
        metric: metric_name(task).to_string(),
        original: mean(&original_folds),
        transformed: mean(&transformed_folds),
        original_folds,
        transformed_folds,
        seed,
        variant: variant.to_string(),
        fold_hash: fold_hash(&split),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRow {
    pub rank: usize,
    pub name: String,
    pub importance: f64,
    pub generated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub rows: Vec<ImportanceRow>,
    /// Fraction of the top 10 (or fewer) features that are generated crosses.
    pub top10_generated_share: f64,
}

impl ImportanceReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("rank\timportance\tgenerated\tfeature\n");
        for r in &self.rows {
            out.push_str(&format!("{}\t{:.6}\t{}\t{}\n", r.rank, r.importance, r.generated, r.name));
        }
        out.push_str(&format!("# top10_generated_share={:.3}\n", self.top10_generated_share));
        out
    }
}

/// Ranks features by their discounted consistency score (descending, ties by
/// name) with infix names rendered from the original column names.
pub fn importance_report(f: &FeatureMatrix, names: &[String], cfg: &UtilityConfig) -> ImportanceReport {
    let imp = feature_importance(f, cfg);
    let mut rows: Vec<ImportanceRow> = f
        .provenance()
        .iter()
        .zip(&imp)
        .map(|(c, &v)| ImportanceRow {
            rank: 0,
            name: render_infix(c, names).unwrap_or_else(|_| c.to_text()),
            importance: v,
            generated: !c.is_original(),
        })
        .collect();
    rows.sort_by(|a, b| b.importance.total_cmp(&a.importance).then_with(|| a.name.cmp(&b.name)));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    let top = rows.len().min(10);
    let share = rows[..top].iter().filter(|r| r.generated).count() as f64 / top.max(1) as f64;
    ImportanceReport {
        rows,
        top10_generated_share: share,
    }
}
