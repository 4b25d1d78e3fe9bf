//! Bundled desk-scale datasets.
//!
//! `synthetic` is generated on the fly: 500 rows, 10 standard-normal
//! features and a regression target built from pairwise products, a sine
//! and a ratio, so useful crosses exist. The two public sets are compiled
//! into the binary from `data/`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tabular::{parse_csv, DataTable, TableError, TaskKind};

const WINE_RED: &str = include_str!("../../../data/winequality_red.csv");
const PIMA: &str = include_str!("../../../data/pima_indian.csv");

pub const SYNTHETIC_ROWS: usize = 500;
pub const SYNTHETIC_FEATURES: usize = 10;
/// Seed of the bundled synthetic table; fixed so every run sees the same data.
pub const SYNTHETIC_SEED: u64 = 20_240_501;

pub const BUILTIN_NAMES: [&str; 3] = ["synthetic", "wine", "pima"];

/// The planted target: products, a sine and a ratio over raw features.
pub fn synthetic_target(x: &[f64]) -> f64 {
    x[0] * x[1] + (3.0 * x[2]).sin() * x[3] + x[4] / (1.0 + x[5] * x[5]) + 0.5 * x[6] * x[6] - x[7] * x[8]
}

pub fn synthetic_raw(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noise = Normal::new(0.0, 0.1).expect("noise");
    let mut cols: Vec<Vec<f64>> = (0..SYNTHETIC_FEATURES).map(|_| Vec::with_capacity(n)).collect();
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..SYNTHETIC_FEATURES).map(|_| normal.sample(&mut rng)).collect();
        y.push(synthetic_target(&row) + noise.sample(&mut rng));
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    (cols, y)
}

pub fn synthetic() -> DataTable {
    let (cols, y) = synthetic_raw(SYNTHETIC_ROWS, SYNTHETIC_SEED);
    let names = (0..SYNTHETIC_FEATURES).map(|j| format!("x{j}")).collect();
    DataTable::from_columns("synthetic", names, cols, y, TaskKind::Regression).expect("well-formed synthetic table")
}

pub fn wine_red() -> DataTable {
    parse_csv(WINE_RED.as_bytes(), "wine", "quality", TaskKind::Classification).expect("bundled wine csv")
}

pub fn pima() -> DataTable {
    parse_csv(PIMA.as_bytes(), "pima", "type", TaskKind::Classification).expect("bundled pima csv")
}

pub fn builtin(name: &str) -> Option<DataTable> {
    match name {
        "synthetic" => Some(synthetic()),
        "wine" => Some(wine_red()),
        "pima" => Some(pima()),
        _ => None,
    }
}

pub fn builtin_target(name: &str) -> Option<&'static str> {
    match name {
        "synthetic" => Some("target"),
        "wine" => Some("quality"),
        "pima" => Some("type"),
        _ => None,
    }
}

/// Reads a builtin by name or a CSV file by path.
pub fn resolve(source: &str, target: &str, task: TaskKind) -> Result<DataTable, TableError> {
    match builtin(source) {
        Some(t) => Ok(t),
        None => crate::tabular::load_csv(std::path::Path::new(source), target, task),
    }
}
