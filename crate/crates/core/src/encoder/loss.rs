use ndarray::Array2;

use super::EncoderError;
use crate::nn::{cosine, cosine_backward};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtXentVariant {
    /// Positive pair excluded from the denominator; the loss can be negative.
    Verbatim,
    /// Positive pair included in the denominator (nonnegative loss).
    Standard,
}

impl NtXentVariant {
    pub fn name(self) -> &'static str {
        match self {
            NtXentVariant::Verbatim => "verbatim",
            NtXentVariant::Standard => "standard",
        }
    }
}

/// Normalized temperature-scaled cross-entropy over `N` view pairs, with
/// row `i` of `z1` anchored against every row of `z2`:
///
/// `L = -(1/N) sum_i log( exp(s_ii/tau) / sum_k exp(s_ik/tau) )`
///
/// where `k` ranges over `k != i` (verbatim) or all `k` (standard). Returns
/// the loss and its gradients with respect to `z1` and `z2`.
pub fn ntxent_loss(
    z1: &Array2<f64>,
    z2: &Array2<f64>,
    tau: f64,
    variant: NtXentVariant,
) -> Result<(f64, Array2<f64>, Array2<f64>), EncoderError> {
    let n = z1.nrows();
    if n < 2 {
        return Err(EncoderError::BatchTooSmall(n));
    }
    assert!(tau > 0.0 && z2.nrows() == n);
    let mut sim = Array2::zeros((n, n));
    for i in 0..n {
        for k in 0..n {
            sim[[i, k]] = cosine(z1.row(i), z2.row(k));
        }
    }
    let mut loss = 0.0;
    // d loss / d sim
    let mut dsim = Array2::zeros((n, n));
    for i in 0..n {
        let denom_ids: Vec<usize> = match variant {
            NtXentVariant::Verbatim => (0..n).filter(|&k| k != i).collect(),
            NtXentVariant::Standard => (0..n).collect(),
        };
        let top = denom_ids.iter().map(|&k| sim[[i, k]] / tau).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = denom_ids.iter().map(|&k| (sim[[i, k]] / tau - top).exp()).sum();
        let lse = top + total.ln();
        loss += -(sim[[i, i]] / tau - lse) / n as f64;
        dsim[[i, i]] -= 1.0 / (n as f64 * tau);
        for &k in &denom_ids {
            let p = (sim[[i, k]] / tau - lse).exp();
            dsim[[i, k]] += p / (n as f64 * tau);
        }
    }
    let mut dz1 = Array2::zeros(z1.raw_dim());
    let mut dz2 = Array2::zeros(z2.raw_dim());
    for i in 0..n {
        for k in 0..n {
            let d = dsim[[i, k]];
            if d == 0.0 {
                continue;
            }
            let (du, dv) = cosine_backward(z1.row(i), z2.row(k), d);
            let mut r1 = dz1.row_mut(i);
            r1 += &du;
            let mut r2 = dz2.row_mut(k);
            r2 += &dv;
        }
    }
    Ok((loss, dz1, dz2))
}
