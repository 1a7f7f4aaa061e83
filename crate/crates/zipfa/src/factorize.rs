//! The alternating factorization loop: block ZIP regressions over loadings
//! and scores with SVD re-orthogonalization and total-likelihood monitoring.
//!
//! The count matrix `A` is modeled cell-wise as zero-inflated Poisson with
//! `ln(lambda) = Lambda = U V'` of rank `K`, `logit(p) = -tau Lambda`, and
//! per-sample offsets `N`. Each outer iteration fits one stacked ZIP
//! regression for the loadings `V` (columns of `A` stacked, block-diagonal
//! copies of `U` as the design) and one for the scores `U` (rows stacked,
//! blocks of `V`), then re-orthogonalizes through an SVD of `U V'`, which
//! leaves the product and hence the likelihood unchanged.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{impute_log, CountMatrix, HeldOutMask, OffsetVector};
use crate::error::{Error, Result};
use crate::linalg::{absorb_scale, truncated_svd};
use crate::num::sigmoid;
use crate::zipreg::{fit_zip_regression, zip_cell_loglik_linked, ZipRegProblem, EXP_CLAMP};

/// How the per-sample offsets entering the Poisson rates are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffsetPolicy {
    /// Relative library sizes from observed row sums (the real-data path).
    #[default]
    Empirical,
    /// All offsets fixed at 1, for data whose generation had no library-size
    /// heterogeneity; with empirical offsets the fitted `Lambda` would
    /// absorb `-ln(N_i)` as an extra rank-one component.
    Unit,
}

/// Options for [`zipfa_fit`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Outer iteration cap.
    pub max_outer_iterations: usize,
    /// Stop when the relative change of the total log-likelihood between
    /// outer iterations falls below this (the 1 per-mille rule).
    pub rel_loglik_tol: f64,
    /// Seed each inner regression with the previous estimates; the cold
    /// start is always the fallback on divergence.
    pub warm_start: bool,
    pub offset_policy: OffsetPolicy,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 100,
            rel_loglik_tol: 1e-3,
            warm_start: true,
            offset_policy: OffsetPolicy::Empirical,
        }
    }
}

/// A fitted zero-inflated Poisson factor model.
#[derive(Debug, Clone)]
pub struct FactorModel {
    /// Scores, `n x K`; the singular-value scale lives here.
    pub u: Array2<f64>,
    /// Loadings, `m x K`, orthonormal columns after the final SVD pass.
    pub v: Array2<f64>,
    /// Shape parameter from the last inner regression.
    pub tau: f64,
    /// Relative library sizes used by the fit.
    pub offsets: OffsetVector,
    pub rank: usize,
    /// Total observed-data log-likelihood after each outer iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FactorModel {
    /// Natural-parameter matrix `Lambda = U V'`.
    pub fn lambda_hat(&self) -> Array2<f64> {
        self.u.dot(&self.v.t())
    }

    pub fn loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Stacks matrix rows into one coefficient vector (row-major).
fn stack_rows(mat: &Array2<f64>) -> Vec<f64> {
    mat.rows().into_iter().flat_map(|r| r.to_vec()).collect()
}

/// Rebuilds a `rows x k` matrix from a stacked coefficient vector.
fn unstack_rows(coef: &[f64], rows: usize, k: usize) -> Array2<f64> {
    assert_eq!(coef.len(), rows * k);
    Array2::from_shape_vec((rows, k), coef.to_vec()).expect("shape consistent")
}

/// Stacked regression for the loadings: response = columns of `A` stacked,
/// design = one diagonal block of `U` per taxon, offsets = `N` repeated.
/// The fitted coefficient vector concatenates the loading rows
/// `v_(1,), ..., v_(m,)`. Held-out cells are dropped row-wise.
pub fn build_loading_problem(
    a: &CountMatrix,
    u: &Array2<f64>,
    offsets: &OffsetVector,
    mask: Option<&HeldOutMask>,
) -> Result<ZipRegProblem> {
    let (n, m) = (a.n_samples(), a.n_taxa());
    assert_eq!(u.nrows(), n, "scores must have one row per sample");
    assert_eq!(offsets.len(), n);
    let k = u.ncols();
    let mut y = Vec::with_capacity(n * m);
    let mut off = Vec::with_capacity(n * m);
    let mut blocks = Vec::with_capacity(m);
    for j in 0..m {
        let keep: Vec<usize> = (0..n)
            .filter(|&i| !mask.is_some_and(|h| h.contains((i, j))))
            .collect();
        let mut block = Array2::zeros((keep.len(), k));
        for (local, &i) in keep.iter().enumerate() {
            y.push(a.values()[[i, j]]);
            off.push(offsets[i]);
            block.row_mut(local).assign(&u.row(i));
        }
        blocks.push(block);
    }
    ZipRegProblem::from_blocks(y, blocks, off)
}

/// Stacked regression for the scores: response = rows of `A` stacked,
/// design = one diagonal block of `V` per sample, offset `N_i` repeated for
/// each of sample `i`'s cells. The fitted coefficients concatenate the score
/// rows `u_(1,), ..., u_(n,)`.
pub fn build_score_problem(
    a: &CountMatrix,
    v: &Array2<f64>,
    offsets: &OffsetVector,
    mask: Option<&HeldOutMask>,
) -> Result<ZipRegProblem> {
    let (n, m) = (a.n_samples(), a.n_taxa());
    assert_eq!(v.nrows(), m, "loadings must have one row per taxon");
    assert_eq!(offsets.len(), n);
    let k = v.ncols();
    let mut y = Vec::with_capacity(n * m);
    let mut off = Vec::with_capacity(n * m);
    let mut blocks = Vec::with_capacity(n);
    for i in 0..n {
        let keep: Vec<usize> = (0..m)
            .filter(|&j| !mask.is_some_and(|h| h.contains((i, j))))
            .collect();
        let mut block = Array2::zeros((keep.len(), k));
        for (local, &j) in keep.iter().enumerate() {
            y.push(a.values()[[i, j]]);
            off.push(offsets[i]);
            block.row_mut(local).assign(&v.row(j));
        }
        blocks.push(block);
    }
    ZipRegProblem::from_blocks(y, blocks, off)
}

/// Total observed-data log-likelihood of the factor model over all cells not
/// in `mask`.
pub fn total_loglik(
    a: &CountMatrix,
    u: &Array2<f64>,
    v: &Array2<f64>,
    tau: f64,
    offsets: &OffsetVector,
    mask: Option<&HeldOutMask>,
) -> f64 {
    let lambda = u.dot(&v.t());
    let (n, m) = lambda.dim();
    let mut ll = 0.0;
    for i in 0..n {
        for j in 0..m {
            if mask.is_some_and(|h| h.contains((i, j))) {
                continue;
            }
            ll += zip_cell_loglik_linked(a.values()[[i, j]], lambda[[i, j]], tau, offsets[i]);
        }
    }
    ll
}

/// Re-orthogonalizes `(U, V)` through the SVD of `U V'`; the product is
/// preserved up to rounding.
fn reorthogonalize(
    u: &Array2<f64>,
    v: &Array2<f64>,
    k: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let product = u.dot(&v.t());
    let triplet = truncated_svd(&product, k)?;
    Ok(absorb_scale(&triplet))
}

/// Fits the rank-`K` factor model by alternating stacked ZIP regressions.
///
/// Initialization imputes zeros (and held-out cells) by column means, takes
/// logs and seeds `(U, V)` from the truncated SVD. Held-out cells are dropped
/// from every stacked response, design and offset and excluded from the
/// likelihood. The shape parameter is re-estimated inside each regression and
/// carried forward as a warm start.
pub fn zipfa_fit(
    a: &CountMatrix,
    k: usize,
    opts: &FitOptions,
    mask: Option<&HeldOutMask>,
) -> Result<FactorModel> {
    let (n, m) = (a.n_samples(), a.n_taxa());
    if k == 0 || k > n.min(m) {
        return Err(Error::Argument(format!(
            "rank {k} out of range for a {n}x{m} matrix"
        )));
    }
    if let Some(h) = mask {
        if h.dims() != (n, m) {
            return Err(Error::Argument(format!(
                "mask dimensions {:?} do not match the {n}x{m} matrix",
                h.dims()
            )));
        }
    }
    let offsets = match opts.offset_policy {
        OffsetPolicy::Empirical => OffsetVector::from_counts_masked(a, mask)?,
        OffsetPolicy::Unit => OffsetVector::from_raw(vec![1.0; n])?,
    };
    let imputed = impute_log(a, mask)?;
    let (mut u, mut v) = absorb_scale(&truncated_svd(&imputed, k)?);

    let mut tau: Option<f64> = None;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut aborted = false;

    for it in 1..=opts.max_outer_iterations {
        // Loadings step: solve for V (and tau) with U fixed.
        let loading_problem = build_loading_problem(a, &u, &offsets, mask)?;
        let v_init = stack_rows(&v);
        let warm_v = match (opts.warm_start, tau) {
            (true, Some(t)) => Some((v_init.as_slice(), t)),
            _ => None,
        };
        let fit_v = match fit_zip_regression(&loading_problem, warm_v) {
            Ok(f) => f,
            Err(e) => {
                if it == 1 {
                    return Err(e);
                }
                aborted = true;
                break;
            }
        };
        v = unstack_rows(&fit_v.beta, m, k);
        tau = Some(fit_v.tau);

        // Scores step: solve for U (and tau) with V fixed.
        let score_problem = build_score_problem(a, &v, &offsets, mask)?;
        let u_init = stack_rows(&u);
        let warm_u = if opts.warm_start {
            Some((u_init.as_slice(), fit_v.tau))
        } else {
            None
        };
        let fit_u = match fit_zip_regression(&score_problem, warm_u) {
            Ok(f) => f,
            Err(e) => {
                if it == 1 {
                    return Err(e);
                }
                aborted = true;
                break;
            }
        };
        u = unstack_rows(&fit_u.beta, n, k);
        tau = Some(fit_u.tau);

        // Re-orthogonalize; the product U V' and the likelihood are unchanged.
        let (u2, v2) = reorthogonalize(&u, &v, k)?;
        u = u2;
        v = v2;

        iterations = it;
        let ll = total_loglik(a, &u, &v, fit_u.tau, &offsets, mask);
        if !ll.is_finite() {
            return Err(Error::Numeric("non-finite total log-likelihood".into()));
        }
        let prev = trace.last().copied();
        trace.push(ll);
        if let Some(prev) = prev {
            if ((ll - prev) / prev.abs().max(1.0)).abs() < opts.rel_loglik_tol {
                converged = true;
                break;
            }
        }
    }

    Ok(FactorModel {
        u,
        v,
        tau: tau.expect("at least one inner fit completed"),
        offsets,
        rank: k,
        loglik_trace: trace,
        iterations,
        converged: converged && !aborted,
    })
}

/// Total probability of observing a zero at each cell:
/// `p_ij + (1 - p_ij) e^{-N_i lambda_ij}` with `logit(p_ij) = -tau Lambda_ij`.
pub fn predict_zero_probability(model: &FactorModel) -> Array2<f64> {
    let lambda = model.lambda_hat();
    let (n, m) = lambda.dim();
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let l = lambda[[i, j]];
            let p = sigmoid(-(model.tau * l));
            let rate = model.offsets[i] * l.clamp(-EXP_CLAMP, EXP_CLAMP).exp();
            out[[i, j]] = p + (1.0 - p) * (-rate).exp();
        }
    }
    out
}

/// On-disk form of a [`FactorModel`]: a JSON document with row-major factor
/// matrices, lossless at full double precision.
#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    rank: usize,
    tau: f64,
    #[serde(rename = "N")]
    offsets: Vec<f64>,
    #[serde(rename = "U")]
    u: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
    loglik_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Serializes the model to its JSON document.
pub fn model_to_json(model: &FactorModel) -> String {
    let doc = ModelDocument {
        rank: model.rank,
        tau: model.tau,
        offsets: model.offsets.values().to_vec(),
        u: model.u.rows().into_iter().map(|r| r.to_vec()).collect(),
        v: model.v.rows().into_iter().map(|r| r.to_vec()).collect(),
        loglik_trace: model.loglik_trace.clone(),
        iterations: model.iterations,
        converged: model.converged,
    };
    serde_json::to_string_pretty(&doc).expect("model serializes")
}

pub fn save_model(model: &FactorModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model) + "\n")?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FactorModel> {
    let text = std::fs::read_to_string(path)?;
    let doc: ModelDocument = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("cannot parse model document: {e}")))?;
    let n = doc.u.len();
    let m = doc.v.len();
    let k = doc.rank;
    if doc.u.iter().any(|r| r.len() != k) || doc.v.iter().any(|r| r.len() != k) {
        return Err(Error::Input("factor rows do not match the rank".into()));
    }
    if doc.offsets.len() != n {
        return Err(Error::Input("offset length does not match U".into()));
    }
    let u = Array2::from_shape_vec((n, k), doc.u.into_iter().flatten().collect())
        .map_err(|e| Error::Input(e.to_string()))?;
    let v = Array2::from_shape_vec((m, k), doc.v.into_iter().flatten().collect())
        .map_err(|e| Error::Input(e.to_string()))?;
    Ok(FactorModel {
        u,
        v,
        tau: doc.tau,
        offsets: OffsetVector::from_raw(doc.offsets)?,
        rank: k,
        loglik_trace: doc.loglik_trace,
        iterations: doc.iterations,
        converged: doc.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn counts(values: Array2<u64>) -> CountMatrix {
        CountMatrix::from_values(values).unwrap()
    }

    fn unit_offsets(n: usize) -> OffsetVector {
        OffsetVector::from_raw(vec![1.0; n]).unwrap()
    }

    #[test]
    fn loading_problem_structure() {
        // n=2, m=3, K=1
        let a = counts(array![[1, 2, 3], [4, 5, 6]]);
        let u = array![[0.5], [1.5]];
        let offsets = OffsetVector::from_raw(vec![0.8, 1.2]).unwrap();
        let prob = build_loading_problem(&a, &u, &offsets, None).unwrap();
        assert_eq!(prob.n_obs(), 6);
        assert_eq!(prob.n_coef(), 3);
        // response stacks columns
        assert_eq!(prob.response(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        // offsets repeat per block
        assert_eq!(prob.offset(), &[0.8, 1.2, 0.8, 1.2, 0.8, 1.2]);
        // dense design is diag(U, U, U)
        let x = prob.design_dense();
        assert_eq!(x.dim(), (6, 3));
        for (row, col, val) in [
            (0, 0, 0.5),
            (1, 0, 1.5),
            (2, 1, 0.5),
            (3, 1, 1.5),
            (4, 2, 0.5),
            (5, 2, 1.5),
        ] {
            assert_eq!(x[[row, col]], val);
        }
        assert_eq!(x.iter().filter(|&&v| v != 0.0).count(), 6);
        // each block equals U
        for block in prob.blocks() {
            assert_eq!(block, &u);
        }
    }

    #[test]
    fn score_problem_structure() {
        let a = counts(array![[1, 2, 3], [4, 5, 6]]);
        let v = array![[0.3], [0.6], [0.9]];
        let offsets = OffsetVector::from_raw(vec![0.8, 1.2]).unwrap();
        let prob = build_score_problem(&a, &v, &offsets, None).unwrap();
        assert_eq!(prob.n_obs(), 6);
        assert_eq!(prob.n_coef(), 2);
        // element (i, j) sits at position i*m + j
        assert_eq!(prob.response(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(prob.offset(), &[0.8, 0.8, 0.8, 1.2, 1.2, 1.2]);
        for block in prob.blocks() {
            assert_eq!(block, &v);
        }
    }

    #[test]
    fn masked_problems_drop_rows() {
        let a = counts(array![[1, 2, 3], [4, 5, 6]]);
        let u = array![[0.5], [1.5]];
        let offsets = unit_offsets(2);
        let mask = HeldOutMask::new(2, 3, vec![(0, 1), (1, 2)]).unwrap();
        let prob = build_loading_problem(&a, &u, &offsets, Some(&mask)).unwrap();
        assert_eq!(prob.n_obs(), 4);
        assert_eq!(prob.response(), &[1.0, 4.0, 5.0, 3.0]);
        let prob =
            build_score_problem(&a, &array![[0.3], [0.6], [0.9]], &offsets, Some(&mask)).unwrap();
        assert_eq!(prob.n_obs(), 4);
        assert_eq!(prob.response(), &[1.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn total_loglik_composes_cell_likelihoods() {
        // Lambda = ln(ln 2) everywhere, tau = 0 -> p = 1/2, rate = ln 2:
        // each zero cell contributes ln(0.5 + 0.5 * exp(-ln 2)) = ln(3/4).
        let a = counts(array![[0, 0], [0, 0]]);
        let l = (2.0f64).ln().ln();
        let u = array![[l], [l]];
        let v = array![[1.0], [1.0]];
        let ll = total_loglik(&a, &u, &v, 0.0, &unit_offsets(2), None);
        assert_abs_diff_eq!(ll, 4.0 * 0.75f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(0.75f64.ln(), -0.2877, epsilon = 1e-4);
    }

    #[test]
    fn total_loglik_is_additive_over_masks() {
        let a = counts(array![[0, 3, 1], [2, 0, 5], [4, 1, 0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = Array2::from_shape_fn((3, 2), |_| rng.random_range(-0.5..0.9));
        let v = Array2::from_shape_fn((3, 2), |_| rng.random_range(-0.5..0.9));
        let offsets = OffsetVector::from_counts(&a).unwrap();
        let mask = HeldOutMask::new(3, 3, vec![(0, 0), (2, 1)]).unwrap();
        let full = total_loglik(&a, &u, &v, 0.7, &offsets, None);
        let masked = total_loglik(&a, &u, &v, 0.7, &offsets, Some(&mask));
        let lambda = u.dot(&v.t());
        let held: f64 = mask
            .cells()
            .iter()
            .map(|&(i, j)| {
                zip_cell_loglik_linked(a.values()[[i, j]], lambda[[i, j]], 0.7, offsets[i])
            })
            .sum();
        assert_abs_diff_eq!(full, masked + held, epsilon = 1e-10);
    }

    #[test]
    fn total_loglik_is_rotation_invariant() {
        let a = counts(array![[0, 3, 1], [2, 0, 5], [4, 1, 0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = Array2::from_shape_fn((3, 2), |_| rng.random_range(-0.5..0.9));
        let v = Array2::from_shape_fn((3, 2), |_| rng.random_range(-0.5..0.9));
        let offsets = unit_offsets(3);
        let theta: f64 = 0.83;
        let r = array![[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
        let (ur, vr) = (u.dot(&r), v.dot(&r));
        let a1 = total_loglik(&a, &u, &v, 1.1, &offsets, None);
        let a2 = total_loglik(&a, &ur, &vr, 1.1, &offsets, None);
        assert_abs_diff_eq!(a1, a2, epsilon = 1e-9);
    }

    #[test]
    fn reorthogonalization_preserves_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = Array2::from_shape_fn((8, 3), |_| rng.random_range(-1.0..1.0));
        let v = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
        let before = u.dot(&v.t());
        let (u2, v2) = reorthogonalize(&u, &v, 3).unwrap();
        let after = u2.dot(&v2.t());
        let num: f64 = (&before - &after).iter().map(|d| d * d).sum::<f64>().sqrt();
        let den: f64 = after.iter().map(|d| d * d).sum::<f64>().sqrt();
        assert!(num <= 1e-10 * den, "product drifted: {num} vs {den}");
        // V has orthonormal columns
        let vtv = v2.t().dot(&v2);
        let eye: Array2<f64> = Array2::eye(3);
        let err: f64 = (&vtv - &eye).iter().map(|d| d * d).sum::<f64>().sqrt();
        assert!(err < 1e-8);
    }

    #[test]
    fn constant_matrix_rank_one_recovers_log_constant() {
        let c = 7u64;
        let a = counts(Array2::from_elem((6, 5), c));
        let model = zipfa_fit(&a, 1, &FitOptions::default(), None).unwrap();
        let lambda = model.lambda_hat();
        for v in lambda.iter() {
            assert!((v - (c as f64).ln()).abs() < 1e-2, "{v}");
        }
    }

    #[test]
    fn loglik_trace_is_monotone_on_small_zip_data() {
        // Small synthetic ZIP matrix with genuine structure and zeros.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (n, m, k) = (20, 12, 2);
        let ut = Array2::from_shape_fn((n, k), |_| rng.random_range(0.2..1.4));
        let vt = Array2::from_shape_fn((m, k), |_| rng.random_range(0.2..1.4));
        let lambda = ut.dot(&vt.t());
        let mut values = Array2::zeros((n, m));
        for i in 0..n {
            for j in 0..m {
                let rate = f64::exp(lambda[[i, j]]);
                let p = sigmoid(-lambda[[i, j]]);
                values[[i, j]] = if rng.random::<f64>() < p {
                    0
                } else {
                    let d = rand_distr::Poisson::new(rate).unwrap();
                    rand_distr::Distribution::sample(&d, &mut rng) as u64
                };
            }
        }
        for j in 0..m {
            if (0..n).all(|i| values[[i, j]] == 0) {
                values[[0, j]] = 1;
            }
        }
        let a = counts(values);
        let model = zipfa_fit(&a, k, &FitOptions::default(), None).unwrap();
        assert!(model.iterations >= 1);
        for w in model.loglik_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-6 * w[0].abs(),
                "trace decreased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let a = counts(array![
            [3, 0, 2, 8],
            [0, 5, 1, 2],
            [7, 2, 0, 1],
            [1, 4, 6, 0],
            [2, 2, 3, 3]
        ]);
        let m1 = zipfa_fit(&a, 2, &FitOptions::default(), None).unwrap();
        let m2 = zipfa_fit(&a, 2, &FitOptions::default(), None).unwrap();
        assert_eq!(m1.loglik_trace, m2.loglik_trace);
        assert_eq!(m1.u, m2.u);
        assert_eq!(m1.v, m2.v);
        assert_eq!(m1.tau, m2.tau);
    }

    #[test]
    fn likelihood_nests_across_ranks_on_clean_poisson_data() {
        // Rank-2 Poisson counts without inflation: fitting at the true rank
        // must score at least as well as the rank-1 fit.
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let (n, m) = (25, 15);
        let ut = Array2::from_shape_fn((n, 2), |_| rng.random_range(0.3..1.2));
        let vt = Array2::from_shape_fn((m, 2), |_| rng.random_range(0.3..1.2));
        let lambda = ut.dot(&vt.t());
        let mut values = Array2::zeros((n, m));
        for i in 0..n {
            for j in 0..m {
                let d = rand_distr::Poisson::new(f64::exp(lambda[[i, j]])).unwrap();
                values[[i, j]] = rand_distr::Distribution::sample(&d, &mut rng) as u64;
            }
        }
        for j in 0..m {
            if (0..n).all(|i| values[[i, j]] == 0) {
                values[[0, j]] = 1;
            }
        }
        let a = counts(values);
        let m1 = zipfa_fit(&a, 1, &FitOptions::default(), None).unwrap();
        let m2 = zipfa_fit(&a, 2, &FitOptions::default(), None).unwrap();
        assert!(
            m2.loglik() >= m1.loglik() - 1e-6 * m1.loglik().abs(),
            "rank 2 fit ({}) worse than rank 1 ({})",
            m2.loglik(),
            m1.loglik()
        );
    }

    #[test]
    fn cold_start_option_disables_warm_seeding() {
        let a = counts(array![
            [3, 0, 2, 8],
            [0, 5, 1, 2],
            [7, 2, 0, 1],
            [1, 4, 6, 0],
            [2, 2, 3, 3]
        ]);
        let opts = FitOptions {
            warm_start: false,
            ..FitOptions::default()
        };
        let model = zipfa_fit(&a, 2, &opts, None).unwrap();
        assert!(model.loglik().is_finite());
        assert!(model.iterations >= 1);
    }

    #[test]
    fn predict_zero_probability_limits() {
        let model = FactorModel {
            u: array![[0.0], [30.0]],
            v: array![[1.0], [1.0]],
            tau: 0.0,
            offsets: unit_offsets(2),
            rank: 1,
            loglik_trace: vec![-1.0],
            iterations: 1,
            converged: true,
        };
        let p = predict_zero_probability(&model);
        // tau = 0: structural part is 1/2 everywhere.
        assert_abs_diff_eq!(p[[0, 0]], 0.5 + 0.5 * (-1.0f64).exp(), epsilon = 1e-12);
        // enormous rate: total collapses to the structural part.
        assert_abs_diff_eq!(p[[1, 0]], 0.5, epsilon = 1e-9);

        // single cell with tau = 1, lambda = 1, N = 1
        let model = FactorModel {
            u: array![[0.0], [0.0]],
            v: array![[1.0], [1.0]],
            tau: 1.0,
            offsets: unit_offsets(2),
            rank: 1,
            loglik_trace: vec![-1.0],
            iterations: 1,
            converged: true,
        };
        let p = predict_zero_probability(&model);
        assert_abs_diff_eq!(p[[0, 0]], 0.5 + 0.5 * (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn model_document_round_trips_losslessly() {
        let a = counts(array![[3, 0, 2, 8], [0, 5, 1, 2], [7, 2, 0, 1], [1, 4, 6, 0]]);
        let model = zipfa_fit(&a, 2, &FitOptions::default(), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model.u, back.u);
        assert_eq!(model.v, back.v);
        assert_eq!(model.tau, back.tau);
        assert_eq!(model.offsets.values(), back.offsets.values());
        assert_eq!(model.loglik_trace, back.loglik_trace);
        assert_eq!(model.iterations, back.iterations);
        assert_eq!(model.converged, back.converged);
        // byte-identical when re-saved
        let again = dir.path().join("model2.json");
        save_model(&back, &again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }
}
