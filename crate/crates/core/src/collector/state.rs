use crate::utility::FeatureMatrix;

pub const STAT_COUNT: usize = 7;
pub const STATE_DIM: usize = STAT_COUNT * STAT_COUNT;

/// Fixed-width description of a feature set: the 7 descriptive statistics
/// (mean, std, min, q25, median, q75, max) of every column, each summarized
/// across columns by the same 7 statistics. Slot `s * 7 + a` holds aggregate
/// `a` of per-column statistic `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub [f64; STATE_DIM]);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn seven_stats(values: &[f64]) -> [f64; STAT_COUNT] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    [
        mean,
        std,
        sorted[0],
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.5),
        quantile_sorted(&sorted, 0.75),
        sorted[sorted.len() - 1],
    ]
}

pub fn describe_state(f: &FeatureMatrix) -> StateVector {
    let per_column: Vec<[f64; STAT_COUNT]> = f.columns().iter().map(|c| seven_stats(c)).collect();
    let mut out = [0.0; STATE_DIM];
    for s in 0..STAT_COUNT {
        let across: Vec<f64> = per_column.iter().map(|st| st[s]).collect();
        let agg = seven_stats(&across);
        out[s * STAT_COUNT..(s + 1) * STAT_COUNT].copy_from_slice(&agg);
    }
    StateVector(out)
}
