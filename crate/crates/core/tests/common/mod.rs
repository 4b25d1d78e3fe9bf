//! Test-side reference implementations, written independently of the
//! library code paths they check.
#![allow(dead_code)]

use neat_core::tabular::{DataTable, TaskKind};
use rand::Rng;

/// Row-major random matrix with entries in [-2, 2).
pub fn random_rows<R: Rng>(n: usize, m: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Brute-force utility: explicit neighbor lists, then a triple loop over
/// features and ordered row pairs.
pub fn mdcg_oracle(rows: &[Vec<f64>], k: usize, constant: f64) -> f64 {
    let n = rows.len();
    let m = rows[0].len();
    let mut knn = vec![vec![false; n]; n];
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (sq_dist(&rows[i], &rows[j]), j)).collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            knn[i][j] = true;
        }
    }
    let mut total = 0.0;
    for q in 0..m {
        let mean = rows.iter().map(|r| r[q]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[q] - mean).powi(2)).sum::<f64>() / n as f64;
        let mut cum = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j && (knn[i][j] || knn[j][i]) {
                    let d = rows[i][q] - rows[j][q];
                    cum += d * d * (-sq_dist(&rows[i], &rows[j]) / constant).exp();
                }
            }
        }
        total += if var < 1e-12 { 1.0 } else { 1.0 - cum / var };
    }
    total / m as f64
}

pub fn small_table<R: Rng>(n: usize, d: usize, rng: &mut R) -> DataTable {
    let cols: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let y = (0..n).map(|i| cols[0][i] - cols[d - 1][i]).collect();
    let names = (0..d).map(|j| format!("c{j}")).collect();
    DataTable::from_columns("t", names, cols, y, TaskKind::Regression).unwrap()
}
