//! The log-SVD comparison method: shift zeros, convert to row compositions,
//! log, row-center, truncate.

use ndarray::{Array2, Axis};

use crate::data::CountMatrix;
use crate::error::Result;
use crate::linalg::{absorb_scale, truncated_svd};

/// `ln((a_ij or 0.5) / rowsum)`: zeros are shifted to 0.5, each row is
/// divided by its (shifted) total, and logs are taken.
pub fn log_transform(a: &CountMatrix) -> Array2<f64> {
    let (n, m) = (a.n_samples(), a.n_taxa());
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        let mut rowsum = 0.0;
        for j in 0..m {
            let v = a.values()[[i, j]];
            rowsum += if v == 0 { 0.5 } else { v as f64 };
        }
        for j in 0..m {
            let v = a.values()[[i, j]];
            let shifted = if v == 0 { 0.5 } else { v as f64 };
            out[[i, j]] = (shifted / rowsum).ln();
        }
    }
    out
}

/// Subtracts each row's mean.
pub fn row_center(m: &Array2<f64>) -> Array2<f64> {
    let means = m.mean_axis(Axis(1)).expect("nonempty rows");
    let mut out = m.clone();
    for (mut row, &mu) in out.rows_mut().into_iter().zip(means.iter()) {
        row.mapv_inplace(|v| v - mu);
    }
    out
}

/// Rank-`k` factors of the row-centered log-composition matrix, with the
/// singular values absorbed into the scores. The matching truth for a loss
/// comparison is the row-centered `Lambda`.
pub fn log_svd_baseline(a: &CountMatrix, k: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    let transformed = row_center(&log_transform(a));
    let triplet = truncated_svd(&transformed, k)?;
    Ok(absorb_scale(&triplet))
}
