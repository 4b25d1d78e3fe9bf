//! Unsupervised feature-set utility.
//!
//! The main measure is the mean discounted cumulative gain (MDCG): for every
//! feature it sums squared value differences over near-neighbor row pairs,
//! weighted by a Gaussian kernel of the row distance, divides by the
//! feature's variance and subtracts from one. The per-feature terms double as
//! feature importances. A correlation-redundancy score is provided as the
//! ablation alternative.

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::FeatureCross;
use crate::tabular::{DataTable, RowSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("need k < n (k={k}, n={n})")]
    DegenerateK { k: usize, n: usize },
    #[error("feature matrix must have at least one column and two rows")]
    EmptyMatrix,
    #[error("column lengths differ")]
    RaggedColumns,
    #[error("matrix contains a non-finite value")]
    NonFinite,
}

/// A materialized explored feature set, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    columns: Vec<Vec<f64>>,
    provenance: Vec<FeatureCross>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<Vec<f64>>, provenance: Vec<FeatureCross>) -> Result<Self, UtilityError> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.is_empty() || n < 2 || provenance.len() != columns.len() {
            return Err(UtilityError::EmptyMatrix);
        }
        if columns.iter().any(|c| c.len() != n) {
            return Err(UtilityError::RaggedColumns);
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(UtilityError::NonFinite);
        }
        Ok(FeatureMatrix { columns, provenance })
    }

    /// Columns without expression provenance (tests and ad-hoc scoring).
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self, UtilityError> {
        let provenance = (0..columns.len()).map(FeatureCross::feature).collect();
        FeatureMatrix::new(columns, provenance)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, UtilityError> {
        let m = rows.first().map_or(0, Vec::len);
        let columns = (0..m).map(|q| rows.iter().map(|r| r[q]).collect()).collect();
        FeatureMatrix::from_columns(columns)
    }

    /// The original features as single-token crosses.
    pub fn from_table(table: &DataTable) -> Self {
        FeatureMatrix::new(table.columns().to_vec(), (0..table.n_features()).map(FeatureCross::feature).collect())
            .expect("DataTable upholds matrix invariants")
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, q: usize) -> &[f64] {
        &self.columns[q]
    }

    pub fn provenance(&self) -> &[FeatureCross] {
        &self.provenance
    }

    pub fn get(&self, i: usize, q: usize) -> f64 {
        self.columns[q][i]
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub(crate) fn push(&mut self, column: Vec<f64>, cross: FeatureCross) {
        debug_assert_eq!(column.len(), self.n_rows());
        self.columns.push(column);
        self.provenance.push(cross);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityConfig {
    pub k_neighbors: usize,
    pub constant: f64,
    pub var_epsilon: f64,
    pub max_rows: usize,
    /// Seed of the row subsample used when `n > max_rows`.
    pub row_seed: u64,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        UtilityConfig {
            k_neighbors: 5,
            constant: 2.0,
            var_epsilon: 1e-12,
            max_rows: 1000,
            row_seed: 0,
        }
    }
}

/// Which utility drives rewards, record scores and final selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UtilityKind {
    Mdcg,
    Redundancy,
}

impl UtilityKind {
    pub fn score(self, f: &FeatureMatrix, cfg: &UtilityConfig) -> f64 {
        match self {
            UtilityKind::Mdcg => mdcg(f, cfg),
            UtilityKind::Redundancy => redundancy_utility(f),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UtilityKind::Mdcg => "mdcg",
            UtilityKind::Redundancy => "redundancy",
        }
    }
}

/// `(F_iq - F_jq)^2 * exp(-||F_i - F_j||^2 / constant)`; lower means more gain.
pub fn pair_gain(f: &FeatureMatrix, i: usize, j: usize, q: usize, constant: f64) -> f64 {
    let d2: f64 = f.columns.iter().map(|c| (c[i] - c[j]) * (c[i] - c[j])).sum();
    let diff = f.columns[q][i] - f.columns[q][j];
    diff * diff * (-d2 / constant).exp()
}

/// Symmetric 0/1 neighbor indicator with zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborIndicator {
    n: usize,
    bits: Vec<bool>,
}

impl NeighborIndicator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    /// Unordered pairs `i < j` with `S_ij = 1`, in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.bits[i * n + j])
            .collect()
    }
}

/// Upper-triangular squared Euclidean distances between rows, flattened so
/// that pair `(i, j)`, `i < j`, lives at `row_offset(i) + (j - i - 1)`.
struct PairDistances {
    n: usize,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl PairDistances {
    fn compute(f: &FeatureMatrix) -> PairDistances {
        let n = f.n_rows();
        let mut offsets = Vec::with_capacity(n);
        let mut acc = 0;
        for i in 0..n {
            offsets.push(acc);
            acc += n - i - 1;
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; n - i - 1];
                for col in &f.columns {
                    let xi = col[i];
                    for (d, &xj) in row.iter_mut().zip(&col[i + 1..]) {
                        let t = xi - xj;
                        *d += t * t;
                    }
                }
                row
            })
            .collect();
        PairDistances {
            n,
            offsets,
            values: rows.concat(),
        }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.values[self.offsets[a] + (b - a - 1)]
    }
}

fn neighbor_bits(dist: &PairDistances, k: usize) -> Vec<bool> {
    let n = dist.n;
    let neighbor_lists: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist.get(i, j), j)).collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
            }
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    let mut bits = vec![false; n * n];
    for (i, list) in neighbor_lists.iter().enumerate() {
        for &j in list {
            bits[i * n + j] = true;
            bits[j * n + i] = true;
        }
    }
    bits
}

/// `S_ij = 1` iff `i` is among the k nearest rows of `j` or vice versa.
/// Distance ties go to the lower row index.
pub fn knn_indicator(f: &FeatureMatrix, k: usize) -> Result<NeighborIndicator, UtilityError> {
    let n = f.n_rows();
    if k >= n || k == 0 {
        return Err(UtilityError::DegenerateK { k, n });
    }
    let dist = PairDistances::compute(f);
    Ok(NeighborIndicator {
        n,
        bits: neighbor_bits(&dist, k),
    })
}

fn prepared<'a>(f: &'a FeatureMatrix, cfg: &UtilityConfig) -> std::borrow::Cow<'a, FeatureMatrix> {
    if f.n_rows() > cfg.max_rows {
        let sample = RowSample::draw(f.n_rows(), cfg.max_rows, cfg.row_seed);
        std::borrow::Cow::Owned(f.select_rows(&sample.indices))
    } else {
        std::borrow::Cow::Borrowed(f)
    }
}

/// Per-feature discounted consistency scores `1 - sum_ij S_ij g^q_ij / Var_q`.
///
/// The sum runs over ordered pairs. Population variance is used; a feature
/// with variance below `var_epsilon` scores exactly 1. When `k >= n` the
/// neighbor count is clamped to `n - 1`.
pub fn feature_importance(f: &FeatureMatrix, cfg: &UtilityConfig) -> Vec<f64> {
    let f = prepared(f, cfg);
    let n = f.n_rows();
    let k = cfg.k_neighbors.clamp(1, n - 1);
    let dist = PairDistances::compute(&f);
    let bits = neighbor_bits(&dist, k);
    let edges: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| bits[i * n + j])
        .map(|(i, j)| (i, j, (-dist.get(i, j) / cfg.constant).exp()))
        .collect();
    f.columns
        .par_iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            if var < cfg.var_epsilon {
                return 1.0;
            }
            let mut cumulative = 0.0;
            for &(i, j, w) in &edges {
                let d = col[i] - col[j];
                cumulative += d * d * w;
            }
            1.0 - 2.0 * cumulative / var
        })
        .collect()
}

/// Mean of [`feature_importance`]; unbounded below.
pub fn mdcg(f: &FeatureMatrix, cfg: &UtilityConfig) -> f64 {
    let imp = feature_importance(f, cfg);
    imp.iter().sum::<f64>() / imp.len() as f64
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// One minus the mean absolute pairwise Pearson correlation. A single
/// feature scores 1.
pub fn redundancy_utility(f: &FeatureMatrix) -> f64 {
    let m = f.n_cols();
    if m < 2 {
        log::warn!("redundancy utility of a single feature is defined as 1");
        return 1.0;
    }
    let mut total = 0.0;
    for p in 0..m {
        for q in (p + 1)..m {
            total += pearson(&f.columns[p], &f.columns[q]).abs();
        }
    }
    1.0 - 2.0 * total / (m * (m - 1)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize) -> UtilityConfig {
        UtilityConfig {
            k_neighbors: k,
            ..UtilityConfig::default()
        }
    }

    #[test]
    fn pair_gain_hand_values() {
        let f = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!((pair_gain(&f, 0, 1, 0, 2.0) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(pair_gain(&f, 1, 1, 0, 2.0), 0.0);
        let f = FeatureMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert!((pair_gain(&f, 0, 1, 0, 2.0) - 4.0 * (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn knn_indicator_cases() {
        let f = FeatureMatrix::from_rows(&[vec![0.0], vec![5.0]]).unwrap();
        let s = knn_indicator(&f, 1).unwrap();
        assert!(s.get(0, 1) && s.get(1, 0) && !s.get(0, 0));
        let f = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![10.0]]).unwrap();
        let s = knn_indicator(&f, 1).unwrap();
        assert_eq!(s.pairs(), vec![(0, 1), (1, 2)]);
        assert!((0..3).all(|i| !s.get(i, i)));
        assert!(matches!(knn_indicator(&f, 3), Err(UtilityError::DegenerateK { .. })));
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        // Row 1 is equidistant from rows 0 and 2 and must pick row 0.
        let f = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![2.5]]).unwrap();
        let s = knn_indicator(&f, 1).unwrap();
        assert_eq!(s.pairs(), vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn constant_columns_score_one() {
        let f = FeatureMatrix::from_columns(vec![vec![3.0; 6], vec![-1.0; 6]]).unwrap();
        assert_eq!(mdcg(&f, &cfg(2)), 1.0);
        assert_eq!(feature_importance(&f, &cfg(2)), vec![1.0, 1.0]);
    }

    #[test]
    fn two_row_hand_case_is_negative() {
        let f = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let expected = 1.0 - 8.0 * (-1f64).exp();
        assert!((mdcg(&f, &cfg(1)) - expected).abs() < 1e-12);
        assert!(expected < -1.9);
    }

    #[test]
    fn importance_mean_is_mdcg() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let x = i as f64;
                vec![x.sin(), (x * 0.3).cos() * 2.0, x * 0.1, (x * 1.7).sin().powi(3)]
            })
            .collect();
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        let imp = feature_importance(&f, &cfg(5));
        assert_eq!(imp.iter().sum::<f64>() / 4.0, mdcg(&f, &cfg(5)));
    }

    #[test]
    fn redundancy_cases() {
        let f = FeatureMatrix::from_columns(vec![vec![1.0, 2.0, 4.0], vec![1.0, 2.0, 4.0]]).unwrap();
        assert!(redundancy_utility(&f).abs() < 1e-12);
        let f = FeatureMatrix::from_columns(vec![vec![1.0, 0.0, -1.0, 0.0], vec![0.0, 1.0, 0.0, -1.0]]).unwrap();
        assert!((redundancy_utility(&f) - 1.0).abs() < 1e-12);
        let f = FeatureMatrix::from_columns(vec![vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(redundancy_utility(&f), 1.0);
        let f = FeatureMatrix::from_columns(vec![vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]]).unwrap();
        assert_eq!(redundancy_utility(&f), 1.0);
    }

    #[test]
    fn matrix_rejects_bad_input() {
        assert_eq!(FeatureMatrix::from_columns(vec![]), Err(UtilityError::EmptyMatrix));
        assert_eq!(
            FeatureMatrix::from_columns(vec![vec![1.0, 2.0], vec![1.0]]),
            Err(UtilityError::RaggedColumns)
        );
        assert_eq!(
            FeatureMatrix::from_columns(vec![vec![1.0, f64::NAN]]),
            Err(UtilityError::NonFinite)
        );
    }

    #[test]
    fn subsampling_caps_rows() {
        let col: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = FeatureMatrix::from_columns(vec![col.clone(), col.iter().map(|v| v * v).collect()]).unwrap();
        let c = UtilityConfig {
            max_rows: 20,
            row_seed: 4,
            ..UtilityConfig::default()
        };
        let sample = RowSample::draw(50, 20, 4);
        let direct = mdcg(&f.select_rows(&sample.indices), &UtilityConfig { max_rows: 1000, ..c });
        assert_eq!(mdcg(&f, &c), direct);
    }
}
