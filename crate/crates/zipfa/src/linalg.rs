//! Truncated singular value decomposition and the score-scaling convention
//! used by initialization and re-orthogonalization.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{Error, Result};

/// Top-`K` singular triplet of a real matrix.
///
/// `left` and `right` have orthonormal columns, `singular` is non-increasing,
/// and each right singular vector is oriented so that its largest-magnitude
/// entry is positive (ties broken by lowest index).
#[derive(Debug, Clone)]
pub struct SvdTriplet {
    pub left: Array2<f64>,
    pub singular: Vec<f64>,
    pub right: Array2<f64>,
}

fn to_nalgebra(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Computes the top-`k` singular triplet of `m`.
///
/// The reconstruction `left * diag(singular) * right^T` is the best rank-`k`
/// approximation of `m` in Frobenius norm.
pub fn truncated_svd(m: &Array2<f64>, k: usize) -> Result<SvdTriplet> {
    let (n, mm) = m.dim();
    if k == 0 || k > n.min(mm) {
        return Err(Error::Argument(format!(
            "rank {k} out of range for a {n}x{mm} matrix"
        )));
    }
    if let Some(bad) = m.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "matrix contains a non-finite entry ({bad})"
        )));
    }

    let mut svd = to_nalgebra(m).svd(true, true);
    svd.sort_by_singular_values();
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");

    let mut left = Array2::zeros((n, k));
    let mut right = Array2::zeros((mm, k));
    let mut singular = Vec::with_capacity(k);
    for c in 0..k {
        singular.push(svd.singular_values[c]);

        // Orient each right vector so its largest-magnitude entry is positive.
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for j in 0..mm {
            let a = vt[(c, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = j;
            }
        }
        let flip = if vt[(c, best)] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..mm {
            right[[j, c]] = flip * vt[(c, j)];
        }
        for i in 0..n {
            left[[i, c]] = flip * u[(i, c)];
        }
    }
    Ok(SvdTriplet {
        left,
        singular,
        right,
    })
}

/// Absorbs the singular values into the scores: returns
/// `(scores, loadings) = (left * diag(singular), right)`.
pub fn absorb_scale(t: &SvdTriplet) -> (Array2<f64>, Array2<f64>) {
    let mut scores = t.left.clone();
    for (c, &s) in t.singular.iter().enumerate() {
        scores.column_mut(c).mapv_inplace(|v| v * s);
    }
    (scores, t.right.clone())
}
