//! Masked cross-validation for picking the factor rank: fit with a fold of
//! cells held out, score the held-out cells under the fitted model, sum over
//! folds, and take the rank with the largest total.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{partition_indices, CountMatrix, HeldOutMask};
use crate::error::{Error, Result};
use crate::factorize::{zipfa_fit, FactorModel, FitOptions};
use crate::zipreg::zip_cell_loglik_linked;

/// Cross-validation configuration.
#[derive(Debug, Clone)]
pub struct CvConfig {
    /// Candidate ranks (deduplicated, ascending).
    pub ranks: Vec<usize>,
    /// Number of folds.
    pub folds: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl CvConfig {
    pub fn new(ranks: impl IntoIterator<Item = usize>, folds: usize, seed: u64) -> Result<Self> {
        let mut ranks: Vec<usize> = ranks.into_iter().collect();
        ranks.sort_unstable();
        ranks.dedup();
        if ranks.is_empty() {
            return Err(Error::Argument("empty candidate rank set".into()));
        }
        if ranks[0] == 0 {
            return Err(Error::Argument("rank 0 is not a valid candidate".into()));
        }
        if folds < 2 {
            return Err(Error::Argument(format!(
                "need at least 2 folds, got {folds}"
            )));
        }
        Ok(Self {
            ranks,
            folds,
            seed,
            fit: FitOptions::default(),
        })
    }
}

/// One evaluated `(rank, fold)` cell.
#[derive(Debug, Clone, Copy)]
pub struct CvCell {
    pub rank: usize,
    pub fold: usize,
    pub heldout_loglik: f64,
}

/// Cross-validation outcome.
#[derive(Debug, Clone)]
pub struct CvResult {
    /// Held-out log-likelihood per retained `(rank, fold)` cell, ordered by
    /// rank then fold.
    pub table: Vec<CvCell>,
    /// Per-rank totals over the retained folds (only valid ranks appear).
    pub totals: Vec<(usize, f64)>,
    /// Rank attaining the maximum total; ties break to the smallest rank.
    pub selected_rank: usize,
    /// Folds removed for every rank to keep comparisons paired.
    pub dropped_folds: Vec<usize>,
    /// Ranks whose fits failed on every fold.
    pub invalid_ranks: Vec<usize>,
}

/// Sum of held-out cell log-likelihoods under a fitted model.
fn heldout_loglik(model: &FactorModel, a: &CountMatrix, fold: &HeldOutMask) -> f64 {
    let lambda = model.lambda_hat();
    fold.cells()
        .iter()
        .map(|&(i, j)| {
            zip_cell_loglik_linked(
                a.values()[[i, j]],
                lambda[[i, j]],
                model.tau,
                model.offsets[i],
            )
        })
        .sum()
}

/// Fits the model with `fold` masked and evaluates the fold's cells.
///
/// Offsets come from row sums that exclude the fold (recomputed inside
/// [`zipfa_fit`]); initialization treats fold cells as missing; the held-out
/// likelihood uses the fitted `Lambda`, shape parameter and those offsets.
pub fn cv_fold_loglik(
    a: &CountMatrix,
    kappa: usize,
    fold: &HeldOutMask,
    opts: &FitOptions,
) -> Result<f64> {
    if fold.is_empty() {
        return Ok(0.0);
    }
    let model = zipfa_fit(a, kappa, opts, Some(fold))?;
    Ok(heldout_loglik(&model, a, fold))
}

/// Evaluates every `(rank, fold)` pair on one shared partition and selects
/// the rank with the maximum total held-out log-likelihood.
///
/// A failed fit is retried once with warm starts disabled. If a fold still
/// fails for a rank that succeeds elsewhere, that fold is dropped for every
/// rank so totals stay paired; a rank that fails on all folds is excluded
/// from the selection instead.
pub fn select_rank(a: &CountMatrix, config: &CvConfig) -> Result<CvResult> {
    let (n, m) = (a.n_samples(), a.n_taxa());
    for &k in &config.ranks {
        if k > n.min(m) {
            return Err(Error::Argument(format!(
                "candidate rank {k} exceeds min(n, m) = {}",
                n.min(m)
            )));
        }
    }
    let folds = partition_indices(n, m, config.folds, config.seed)?;

    let cells: Vec<(usize, usize)> = config
        .ranks
        .iter()
        .flat_map(|&k| (0..folds.len()).map(move |t| (k, t)))
        .collect();
    let outcomes: Vec<Option<f64>> = cells
        .par_iter()
        .map(|&(rank, t)| {
            let fold = &folds[t];
            match cv_fold_loglik(a, rank, fold, &config.fit) {
                Ok(ll) => Some(ll),
                Err(_) => {
                    let cold = FitOptions {
                        warm_start: false,
                        ..config.fit.clone()
                    };
                    cv_fold_loglik(a, rank, fold, &cold).ok()
                }
            }
        })
        .collect();

    // Ranks that failed everywhere are invalid; remaining failures drop the
    // fold for everyone.
    let n_folds = folds.len();
    let mut invalid_ranks = Vec::new();
    let mut dropped = vec![false; n_folds];
    for (ri, &rank) in config.ranks.iter().enumerate() {
        let row = &outcomes[ri * n_folds..(ri + 1) * n_folds];
        if row.iter().all(Option::is_none) {
            invalid_ranks.push(rank);
        } else {
            for (t, cell) in row.iter().enumerate() {
                if cell.is_none() {
                    dropped[t] = true;
                }
            }
        }
    }
    let valid_ranks: Vec<usize> = config
        .ranks
        .iter()
        .copied()
        .filter(|r| !invalid_ranks.contains(r))
        .collect();
    if valid_ranks.is_empty() {
        return Err(Error::Selection(
            "every candidate rank failed on every fold".into(),
        ));
    }
    if dropped.iter().all(|&d| d) {
        return Err(Error::Selection(
            "every fold failed for some rank; no paired folds remain".into(),
        ));
    }

    let mut table = Vec::new();
    let mut totals = Vec::new();
    for (ri, &rank) in config.ranks.iter().enumerate() {
        if invalid_ranks.contains(&rank) {
            continue;
        }
        let row = &outcomes[ri * n_folds..(ri + 1) * n_folds];
        let mut total = 0.0;
        for (t, cell) in row.iter().enumerate() {
            if dropped[t] {
                continue;
            }
            let ll = cell.expect("undropped cell of a valid rank");
            table.push(CvCell {
                rank,
                fold: t,
                heldout_loglik: ll,
            });
            total += ll;
        }
        totals.push((rank, total));
    }
    let selected_rank = totals
        .iter()
        .fold((usize::MAX, f64::NEG_INFINITY), |best, &(rank, total)| {
            if total > best.1 {
                (rank, total)
            } else {
                best
            }
        })
        .0;
    Ok(CvResult {
        table,
        totals,
        selected_rank,
        dropped_folds: (0..n_folds).filter(|&t| dropped[t]).collect(),
        invalid_ranks,
    })
}

/// Renders one or more CV results as CSV: detail rows, then a summary block.
/// With a single result the columns are exactly
/// `rank,fold,heldout_loglik` and `rank,total_loglik,selected`; with
/// repeats, a leading `repeat` column is added to both blocks.
pub fn write_cv_csv(results: &[CvResult]) -> String {
    let repeats = results.len() > 1;
    let mut out = String::new();
    if repeats {
        out.push_str("repeat,rank,fold,heldout_loglik\n");
    } else {
        out.push_str("rank,fold,heldout_loglik\n");
    }
    for (rep, result) in results.iter().enumerate() {
        for cell in &result.table {
            if repeats {
                write!(out, "{rep},").expect("string write");
            }
            writeln!(out, "{},{},{}", cell.rank, cell.fold, cell.heldout_loglik)
                .expect("string write");
        }
    }
    out.push('\n');
    if repeats {
        out.push_str("repeat,rank,total_loglik,selected\n");
    } else {
        out.push_str("rank,total_loglik,selected\n");
    }
    for (rep, result) in results.iter().enumerate() {
        for &(rank, total) in &result.totals {
            if repeats {
                write!(out, "{rep},").expect("string write");
            }
            writeln!(out, "{},{},{}", rank, total, rank == result.selected_rank)
                .expect("string write");
        }
    }
    out
}

/// Rank with the largest total across repeats, counting only ranks valid in
/// every repeat; ties break to the smallest rank.
pub fn select_across_repeats(results: &[CvResult]) -> Result<usize> {
    let first = results
        .first()
        .ok_or_else(|| Error::Selection("no CV results".into()))?;
    let mut best: Option<(usize, f64)> = None;
    for &(rank, _) in &first.totals {
        let mut sum = 0.0;
        let mut everywhere = true;
        for r in results {
            match r.totals.iter().find(|&&(k, _)| k == rank) {
                Some(&(_, t)) => sum += t,
                None => {
                    everywhere = false;
                    break;
                }
            }
        }
        if !everywhere {
            continue;
        }
        if best.is_none_or(|(_, b)| sum > b) {
            best = Some((rank, sum));
        }
    }
    best.map(|(rank, _)| rank)
        .ok_or_else(|| Error::Selection("no rank is valid in every repeat".into()))
}
