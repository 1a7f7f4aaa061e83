//! Zero-inflated Poisson regression with a rate-linked zero probability.
//!
//! The model for one observation with design row `X_i`, offset `m_i` and
//! linear predictor `x_i = X_i' beta` is
//!
//! ```text
//! Y_i = 0                     with probability p_i,
//! Y_i ~ Poisson(m_i e^{x_i})  with probability 1 - p_i,
//! logit(p_i) = -tau * x_i,
//! ```
//!
//! fitted by an EM algorithm: the E step fills in the posterior probability
//! `z_i` that an observed zero is structural, and the M step minimizes the
//! resulting conditional negative log-likelihood `Q(beta, tau)` with a
//! Levenberg-Marquardt iteration on the analytic gradient and Hessian.
//!
//! Designs are block diagonal (a dense design is a single block), which keeps
//! the stacked regressions of the factorization loop cheap: the Hessian in
//! `beta` decomposes into one small block per design block plus a shared
//! `tau` row solved through its Schur complement.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::num::{ln_factorial, log1pexp, logaddexp, sigmoid};

/// Linear predictors are clamped to this magnitude inside rate exponentials;
/// Poisson rates beyond `e^30` are unphysical for read counts.
pub const EXP_CLAMP: f64 = 30.0;

/// EM iteration cap for [`fit_zip_regression`].
pub const EM_MAX_ITERATIONS: usize = 500;

/// EM stops when the relative Frobenius change of `beta` drops below this.
pub const EM_REL_TOL: f64 = 1e-3;

/// Levenberg-Marquardt iteration cap inside one M step.
pub const LM_MAX_ITERATIONS: usize = 200;

/// The M step stops when the gradient infinity-norm drops below this.
pub const LM_GRAD_TOL: f64 = 1e-8;

/// Default initial damping factor (`mu = rho * max element of J0' J0`).
pub const LM_DEFAULT_RHO: f64 = 1e-5;

/// Gain-ratio acceptance cutoff for a Levenberg-Marquardt step.
pub const LM_DELTA_THRESHOLD: f64 = 1e-3;

fn clamp_exp_arg(x: f64) -> f64 {
    x.clamp(-EXP_CLAMP, EXP_CLAMP)
}

/// A stacked zero-inflated Poisson regression instance.
///
/// The design is block diagonal: coefficient segment `b` multiplies the rows
/// of `blocks[b]` and no others. A single block is an ordinary dense design.
#[derive(Debug, Clone)]
pub struct ZipRegProblem {
    y: Vec<f64>,
    offset: Vec<f64>,
    blocks: Vec<Array2<f64>>,
    row_starts: Vec<usize>,
    coef_starts: Vec<usize>,
    /// `sum_i ln(y_i!)`, a constant of the objective.
    const_ln_y_fact: f64,
    /// `sum_i y_i ln(m_i)`, a constant of the objective.
    const_y_ln_offset: f64,
}

impl ZipRegProblem {
    /// Single-block (dense design) problem.
    pub fn new(y: Vec<u64>, design: Array2<f64>, offset: Vec<f64>) -> Result<Self> {
        Self::from_blocks(y, vec![design], offset)
    }

    /// Block-diagonal problem; the response and offset are stacked block by
    /// block in order.
    pub fn from_blocks(y: Vec<u64>, blocks: Vec<Array2<f64>>, offset: Vec<f64>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Argument("design has no blocks".into()));
        }
        let n_obs: usize = blocks.iter().map(|b| b.nrows()).sum();
        if y.len() != n_obs || offset.len() != n_obs {
            return Err(Error::Argument(format!(
                "dimension mismatch: design has {n_obs} rows, response {} and offset {}",
                y.len(),
                offset.len()
            )));
        }
        if n_obs == 0 {
            return Err(Error::Argument("empty regression problem".into()));
        }
        for (i, &m) in offset.iter().enumerate() {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::Argument(format!(
                    "offset {i} must be positive and finite, got {m}"
                )));
            }
        }
        for (b, block) in blocks.iter().enumerate() {
            if block.ncols() == 0 {
                return Err(Error::Argument(format!("design block {b} has no columns")));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::Argument(format!(
                    "design block {b} contains a non-finite value"
                )));
            }
        }
        let mut row_starts = Vec::with_capacity(blocks.len() + 1);
        let mut coef_starts = Vec::with_capacity(blocks.len() + 1);
        let (mut r, mut c) = (0usize, 0usize);
        for block in &blocks {
            row_starts.push(r);
            coef_starts.push(c);
            r += block.nrows();
            c += block.ncols();
        }
        row_starts.push(r);
        coef_starts.push(c);

        let const_ln_y_fact = y.iter().map(|&v| ln_factorial(v)).sum();
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let const_y_ln_offset = yf
            .iter()
            .zip(&offset)
            .map(|(&yi, &mi)| yi * mi.ln())
            .sum();
        Ok(Self {
            y: yf,
            offset,
            blocks,
            row_starts,
            coef_starts,
            const_ln_y_fact,
            const_y_ln_offset,
        })
    }

    pub fn n_obs(&self) -> usize {
        *self.row_starts.last().unwrap()
    }

    /// Total coefficient dimension `p`.
    pub fn n_coef(&self) -> usize {
        *self.coef_starts.last().unwrap()
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn blocks(&self) -> &[Array2<f64>] {
        &self.blocks
    }

    /// Materializes the block-diagonal design as a dense matrix. Intended for
    /// tests and small problems.
    pub fn design_dense(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.n_obs(), self.n_coef()));
        for (b, block) in self.blocks.iter().enumerate() {
            let (r0, c0) = (self.row_starts[b], self.coef_starts[b]);
            for i in 0..block.nrows() {
                for j in 0..block.ncols() {
                    x[[r0 + i, c0 + j]] = block[[i, j]];
                }
            }
        }
        x
    }

    /// Linear predictors `x_i = X_i' beta` for all rows.
    fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.n_coef());
        let mut x = vec![0.0; self.n_obs()];
        for (b, block) in self.blocks.iter().enumerate() {
            let seg = &beta[self.coef_starts[b]..self.coef_starts[b + 1]];
            let r0 = self.row_starts[b];
            for (local, row) in block.rows().into_iter().enumerate() {
                x[r0 + local] = row.iter().zip(seg).map(|(a, b)| a * b).sum();
            }
        }
        x
    }

    /// Errors unless every design block has full column rank.
    pub fn check_full_rank(&self) -> Result<()> {
        for (b, block) in self.blocks.iter().enumerate() {
            let k = block.ncols();
            if block.nrows() < k {
                return Err(Error::Argument(format!(
                    "design block {b} has fewer rows ({}) than columns ({k})",
                    block.nrows()
                )));
            }
            let m = nalgebra::DMatrix::from_fn(block.nrows(), k, |i, j| block[[i, j]]);
            let svals = m.singular_values();
            let max = svals.max();
            let min = svals.min();
            if !(min > max * 1e-10) {
                return Err(Error::Argument(format!(
                    "design block {b} is rank deficient (singular values {min:e}..{max:e})"
                )));
            }
        }
        Ok(())
    }
}

/// Mixture probability of one cell: `p 1(a=0) + (1-p) Poisson(a; N lambda)`.
pub fn zip_cell_likelihood(a: u64, lambda: f64, p: f64, n: f64) -> f64 {
    let rate = n * lambda;
    let pois = (a as f64 * rate.ln() - rate - ln_factorial(a)).exp();
    if a == 0 {
        p + (1.0 - p) * pois
    } else {
        (1.0 - p) * pois
    }
}

/// Log of [`zip_cell_likelihood`], computed without underflow.
pub fn zip_cell_loglik(a: u64, lambda: f64, p: f64, n: f64) -> f64 {
    let rate = n * lambda;
    if a == 0 {
        logaddexp(p.ln(), (1.0 - p).ln() - rate)
    } else {
        (1.0 - p).ln() + a as f64 * rate.ln() - rate - ln_factorial(a)
    }
}

/// Log cell likelihood under the linked parameterization
/// `logit(p) = -tau * log_lambda`, stable for `|log_lambda|` up to the clamp.
pub fn zip_cell_loglik_linked(a: u64, log_lambda: f64, tau: f64, n: f64) -> f64 {
    let s = tau * log_lambda;
    let rate = n * clamp_exp_arg(log_lambda).exp();
    if a == 0 {
        // ln[(1 + e^{s - rate}) / (1 + e^s)]
        log1pexp(s - rate) - log1pexp(s)
    } else {
        // ln(1-p) = -ln(1 + e^{-s})
        -log1pexp(-s) + a as f64 * (log_lambda + n.ln()) - rate - ln_factorial(a)
    }
}

/// E step: posterior probability that each observed zero is structural,
/// `z_i = {1 + exp(tau x_i - m_i e^{x_i})}^{-1}` for `y_i = 0`, else 0.
pub fn e_step(problem: &ZipRegProblem, beta: &[f64], tau: f64) -> Vec<f64> {
    let x = problem.linear_predictor(beta);
    let mut z = vec![0.0; problem.n_obs()];
    for i in 0..problem.n_obs() {
        if problem.y[i] == 0.0 {
            let rate = problem.offset[i] * clamp_exp_arg(x[i]).exp();
            z[i] = sigmoid(-(tau * x[i] - rate));
        }
    }
    z
}

/// Observed-data log-likelihood at `(beta, tau)`.
pub fn observed_loglik(problem: &ZipRegProblem, beta: &[f64], tau: f64) -> f64 {
    let x = problem.linear_predictor(beta);
    let mut ll = 0.0;
    for i in 0..problem.n_obs() {
        ll += zip_cell_loglik_linked(problem.y[i] as u64, x[i], tau, problem.offset[i]);
    }
    ll
}

/// Hessian of the M-step objective in block form: diagonal `beta` blocks, the
/// `tau` row, and the `tau, tau` corner.
#[derive(Debug, Clone)]
struct HessParts {
    blocks: Vec<Vec<f64>>,
    tau_beta: Vec<f64>,
    tau_tau: f64,
}

/// Value, gradient and Hessian of `Q(beta, tau) = -E_z[ln L]`.
fn q_derivatives(
    problem: &ZipRegProblem,
    beta: &[f64],
    tau: f64,
    z: &[f64],
) -> Result<(f64, Vec<f64>, HessParts)> {
    let p_dim = problem.n_coef();
    let mut value = problem.const_ln_y_fact - problem.const_y_ln_offset;
    let mut grad = vec![0.0; p_dim + 1];
    let mut tau_beta = vec![0.0; p_dim];
    let mut tau_tau = 0.0;
    let mut blocks = Vec::with_capacity(problem.blocks.len());

    for (b, block) in problem.blocks.iter().enumerate() {
        let k = block.ncols();
        let c0 = problem.coef_starts[b];
        let r0 = problem.row_starts[b];
        let seg = &beta[c0..c0 + k];
        let mut hblock = vec![0.0; k * k];
        for (local, row) in block.rows().into_iter().enumerate() {
            let i = r0 + local;
            let (yi, mi, zi) = (problem.y[i], problem.offset[i], z[i]);
            let xi: f64 = row.iter().zip(seg).map(|(a, b)| a * b).sum();
            let ti = tau * xi;
            let pi = sigmoid(-ti);
            let pq = sigmoid(ti) * pi;
            let inside = xi.abs() < EXP_CLAMP;
            let rate = mi * clamp_exp_arg(xi).exp();
            let drate = if inside { rate } else { 0.0 };

            // Q value: z t + ln(1+e^{-t}) - (1-z)(y x - rate); offset and
            // factorial terms are folded into the constants above.
            value += zi * ti + log1pexp(-ti) - (1.0 - zi) * (yi * xi - rate);

            // d lnL / d x_i and the tau entry.
            let score = tau * (pi - zi) + (1.0 - zi) * (yi - drate);
            let grad_coef = -score;
            grad[p_dim] -= (pi - zi) * xi;

            // Curvatures: -d2 lnL.
            let r_q = tau * tau * pq + (1.0 - zi) * drate;
            let v = pi - ti * pq;
            let cross = -(v - zi);

            tau_tau += xi * xi * pq;
            for (a, &xa) in row.iter().enumerate() {
                grad[c0 + a] += grad_coef * xa;
                tau_beta[c0 + a] += cross * xa;
                for (bb, &xb) in row.iter().enumerate().skip(a) {
                    hblock[a * k + bb] += r_q * xa * xb;
                }
            }
        }
        // Mirror the upper triangle.
        for a in 0..k {
            for bb in 0..a {
                hblock[a * k + bb] = hblock[bb * k + a];
            }
        }
        blocks.push(hblock);
    }

    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        let idx = locate_nonfinite_row(problem, beta, tau);
        return Err(Error::Numeric(format!(
            "non-finite derivative at observation {idx:?}"
        )));
    }
    Ok((
        value,
        grad,
        HessParts {
            blocks,
            tau_beta,
            tau_tau,
        },
    ))
}

fn locate_nonfinite_row(problem: &ZipRegProblem, beta: &[f64], tau: f64) -> Option<usize> {
    let x = problem.linear_predictor(beta);
    x.iter()
        .position(|&xi| !xi.is_finite() || !(tau * xi).is_finite())
}

/// Objective value only (used for gain ratios).
fn q_value(problem: &ZipRegProblem, beta: &[f64], tau: f64, z: &[f64]) -> f64 {
    let x = problem.linear_predictor(beta);
    let mut value = problem.const_ln_y_fact - problem.const_y_ln_offset;
    for i in 0..problem.n_obs() {
        let (yi, mi, zi) = (problem.y[i], problem.offset[i], z[i]);
        let ti = tau * x[i];
        let rate = mi * clamp_exp_arg(x[i]).exp();
        value += zi * ti + log1pexp(-ti) - (1.0 - zi) * (yi * x[i] - rate);
    }
    value
}

/// Public M-step objective: value, gradient and dense Hessian of
/// `Q(beta, tau)` with the parameter order `(beta_1..beta_p, tau)`.
pub fn joint_neg_loglik(
    problem: &ZipRegProblem,
    beta: &[f64],
    tau: f64,
    z: &[f64],
) -> Result<(f64, Vec<f64>, Array2<f64>)> {
    let (value, grad, parts) = q_derivatives(problem, beta, tau, z)?;
    let p = problem.n_coef();
    let mut hess = Array2::zeros((p + 1, p + 1));
    for (b, hb) in parts.blocks.iter().enumerate() {
        let k = problem.blocks[b].ncols();
        let c0 = problem.coef_starts[b];
        for a in 0..k {
            for bb in 0..k {
                hess[[c0 + a, c0 + bb]] = hb[a * k + bb];
            }
        }
    }
    for j in 0..p {
        hess[[p, j]] = parts.tau_beta[j];
        hess[[j, p]] = parts.tau_beta[j];
    }
    hess[[p, p]] = parts.tau_tau;
    Ok((value, grad, hess))
}

/// In-place lower Cholesky of a `k x k` row-major symmetric matrix.
/// Returns false when the matrix is not positive definite.
fn cholesky_in_place(a: &mut [f64], k: usize) -> bool {
    for j in 0..k {
        let mut d = a[j * k + j];
        for l in 0..j {
            d -= a[j * k + l] * a[j * k + l];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let dj = d.sqrt();
        a[j * k + j] = dj;
        for i in (j + 1)..k {
            let mut s = a[i * k + j];
            for l in 0..j {
                s -= a[i * k + l] * a[j * k + l];
            }
            a[i * k + j] = s / dj;
        }
    }
    true
}

/// Solves `L L' x = b` given the Cholesky factor from [`cholesky_in_place`].
fn cholesky_solve(l: &[f64], k: usize, b: &mut [f64]) {
    for i in 0..k {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i * k + j] * b[j];
        }
        b[i] = s / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in (i + 1)..k {
            s -= l[j * k + i] * b[j];
        }
        b[i] = s / l[i * k + i];
    }
}

/// Attempts to solve `(H + mu I) h = -grad` through per-block Cholesky
/// factorizations plus a Schur complement for the `tau` row. `None` means
/// `H + mu I` is not positive definite at this `mu`.
fn solve_damped(
    problem: &ZipRegProblem,
    parts: &HessParts,
    grad: &[f64],
    mu: f64,
) -> Option<Vec<f64>> {
    let p = problem.n_coef();
    let mut h = vec![0.0; p + 1];
    let mut schur = parts.tau_tau + mu;
    let mut rhs_tau = -grad[p];

    let mut factors: Vec<Vec<f64>> = Vec::with_capacity(parts.blocks.len());
    for (b, hb) in parts.blocks.iter().enumerate() {
        let k = problem.blocks[b].ncols();
        let c0 = problem.coef_starts[b];
        let mut a = hb.clone();
        for d in 0..k {
            a[d * k + d] += mu;
        }
        if !cholesky_in_place(&mut a, k) {
            return None;
        }
        // w = A^{-1} c ; q = A^{-1} (-g)
        let mut w: Vec<f64> = parts.tau_beta[c0..c0 + k].to_vec();
        cholesky_solve(&a, k, &mut w);
        let mut q: Vec<f64> = grad[c0..c0 + k].iter().map(|g| -g).collect();
        cholesky_solve(&a, k, &mut q);
        for j in 0..k {
            schur -= parts.tau_beta[c0 + j] * w[j];
            rhs_tau -= parts.tau_beta[c0 + j] * q[j];
            h[c0 + j] = q[j]; // finished below once h_tau is known
        }
        factors.push(w);
    }
    if !(schur > 0.0) || !schur.is_finite() {
        return None;
    }
    let h_tau = rhs_tau / schur;
    for (b, w) in factors.iter().enumerate() {
        let c0 = problem.coef_starts[b];
        for (j, &wj) in w.iter().enumerate() {
            h[c0 + j] -= h_tau * wj;
        }
    }
    h[p] = h_tau;
    if h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(h)
}

/// Damping-parameter state of the Levenberg-Marquardt iteration.
#[derive(Debug, Clone, Copy)]
pub struct LmState {
    /// Current damping parameter.
    pub mu: f64,
    /// Initial damping factor applied to the largest element of `J0' J0`.
    pub rho: f64,
    /// Gain-ratio acceptance cutoff.
    pub delta_threshold: f64,
}

impl LmState {
    /// Initializes `mu = rho * max(J0' J0)` from the gradient at the starting
    /// point; the largest element of that outer product is `|J0|_inf^2`.
    pub fn init(problem: &ZipRegProblem, beta: &[f64], tau: f64, z: &[f64]) -> Result<Self> {
        let (_, grad, _) = q_derivatives(problem, beta, tau, z)?;
        Ok(Self::from_gradient(&grad, LM_DEFAULT_RHO))
    }

    fn from_gradient(grad: &[f64], rho: f64) -> Self {
        let gmax = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        LmState {
            mu: (rho * gmax * gmax).max(f64::MIN_POSITIVE),
            rho,
            delta_threshold: LM_DELTA_THRESHOLD,
        }
    }
}

/// Damping multiplier applied after an accepted step with gain ratio `delta`.
pub fn lm_mu_update(delta: f64) -> f64 {
    let c = 2.0 * delta - 1.0;
    (1.0 - c * c * c).max(1.0 / 3.0)
}

/// Outcome of one Levenberg-Marquardt step.
#[derive(Debug, Clone)]
pub struct LmStep {
    pub beta: Vec<f64>,
    pub tau: f64,
    pub state: LmState,
    pub accepted: bool,
    pub gain_ratio: f64,
}

/// One Levenberg-Marquardt step on `Q(beta, tau)` at fixed `z`: doubles `mu`
/// until `H + mu I` admits a symmetric factorization, solves for the step,
/// and accepts or rejects it by the gain ratio.
pub fn lm_step(
    problem: &ZipRegProblem,
    state: LmState,
    beta: &[f64],
    tau: f64,
    z: &[f64],
) -> Result<LmStep> {
    let (q0, grad, parts) = q_derivatives(problem, beta, tau, z)?;
    let mut mu = state.mu;
    let h = loop {
        if let Some(h) = solve_damped(problem, &parts, &grad, mu) {
            break h;
        }
        mu *= 2.0;
        if !mu.is_finite() {
            return Err(Error::Numeric(
                "damping parameter overflowed while seeking positive definiteness".into(),
            ));
        }
    };
    let p = problem.n_coef();
    let cand_beta: Vec<f64> = beta.iter().zip(&h).map(|(b, d)| b + d).collect();
    let cand_tau = tau + h[p];
    let q1 = q_value(problem, &cand_beta, cand_tau, z);

    // With (H + mu I) h = -J the denominator h'J + h'(H + mu I)h / 2
    // simplifies to h'J / 2, which is negative for a descent direction.
    let denom = 0.5 * h.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>();
    let gain = if denom == 0.0 {
        0.0
    } else {
        -(q0 - q1) / denom
    };

    if q1.is_finite() && gain > state.delta_threshold {
        Ok(LmStep {
            beta: cand_beta,
            tau: cand_tau,
            state: LmState {
                mu: mu * lm_mu_update(gain),
                ..state
            },
            accepted: true,
            gain_ratio: gain,
        })
    } else {
        Ok(LmStep {
            beta: beta.to_vec(),
            tau,
            state: LmState {
                mu: mu * 2.0,
                ..state
            },
            accepted: false,
            gain_ratio: gain,
        })
    }
}

fn grad_inf_norm(grad: &[f64]) -> f64 {
    grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()))
}

/// Full M step: Levenberg-Marquardt from `(beta, tau)` until the gradient
/// infinity-norm drops below [`LM_GRAD_TOL`] or [`LM_MAX_ITERATIONS`] is hit.
fn m_step(
    problem: &ZipRegProblem,
    beta: &mut Vec<f64>,
    tau: &mut f64,
    z: &[f64],
) -> Result<()> {
    let (_, grad, _) = q_derivatives(problem, beta, tau.to_owned(), z)?;
    if grad_inf_norm(&grad) < LM_GRAD_TOL {
        return Ok(());
    }
    let mut state = LmState::from_gradient(&grad, LM_DEFAULT_RHO);
    for _ in 0..LM_MAX_ITERATIONS {
        let step = lm_step(problem, state, beta, *tau, z)?;
        state = step.state;
        if step.accepted {
            let moved: f64 = step
                .beta
                .iter()
                .zip(beta.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                + (step.tau - *tau).abs();
            *beta = step.beta;
            *tau = step.tau;
            let (_, grad, _) = q_derivatives(problem, beta, *tau, z)?;
            if grad_inf_norm(&grad) < LM_GRAD_TOL {
                break;
            }
            let scale = beta.iter().map(|b| b * b).sum::<f64>().sqrt() + tau.abs();
            if moved <= 1e-14 * (scale + 1e-14) {
                break;
            }
        } else if state.mu > 1e120 {
            // No step of any size improves the objective; numerically at a
            // stationary point.
            break;
        }
    }
    Ok(())
}

/// Poisson GLM with log link and offset, fitted by Newton iterations with
/// step halving. Block-diagonal designs separate, so each block is solved
/// independently; the returned score satisfies
/// `|score|_inf < 1e-8 * n_obs` at the solution.
pub fn fit_poisson_glm(problem: &ZipRegProblem) -> Result<Vec<f64>> {
    let tol = 1e-8 * problem.n_obs() as f64;
    let mut beta = vec![0.0; problem.n_coef()];
    for (b, block) in problem.blocks.iter().enumerate() {
        let k = block.ncols();
        let c0 = problem.coef_starts[b];
        let r0 = problem.row_starts[b];
        let seg = &mut beta[c0..c0 + k];

        let loglik = |s: &[f64]| -> f64 {
            let mut ll = 0.0;
            for (local, row) in block.rows().into_iter().enumerate() {
                let i = r0 + local;
                let x: f64 = row.iter().zip(s.iter()).map(|(a, b)| a * b).sum();
                ll += problem.y[i] * x - problem.offset[i] * clamp_exp_arg(x).exp();
            }
            ll
        };

        let mut ll = loglik(seg);
        let mut converged = false;
        for _ in 0..100 {
            let mut score = vec![0.0; k];
            let mut info = vec![0.0; k * k];
            for (local, row) in block.rows().into_iter().enumerate() {
                let i = r0 + local;
                let x: f64 = row.iter().zip(seg.iter()).map(|(a, b)| a * b).sum();
                let inside = x.abs() < EXP_CLAMP;
                let rate = problem.offset[i] * clamp_exp_arg(x).exp();
                let w = if inside { rate } else { 0.0 };
                let resid = problem.y[i] - w;
                for (a, &xa) in row.iter().enumerate() {
                    score[a] += resid * xa;
                    for (bb, &xb) in row.iter().enumerate().skip(a) {
                        info[a * k + bb] += w * xa * xb;
                    }
                }
            }
            if grad_inf_norm(&score) < tol {
                converged = true;
                break;
            }
            for a in 0..k {
                for bb in 0..a {
                    info[a * k + bb] = info[bb * k + a];
                }
            }
            let mut delta = score.clone();
            if !cholesky_in_place(&mut info, k) {
                return Err(Error::NoConvergence {
                    iterations: 0,
                    context: format!("Poisson GLM information matrix singular in block {b}"),
                });
            }
            cholesky_solve(&info, k, &mut delta);

            // Step halving until the log-likelihood does not decrease.
            let mut step = 1.0;
            let mut improved = false;
            for _ in 0..50 {
                let trial: Vec<f64> = seg
                    .iter()
                    .zip(&delta)
                    .map(|(s, d)| s + step * d)
                    .collect();
                let trial_ll = loglik(&trial);
                if trial_ll.is_finite() && trial_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                    seg.copy_from_slice(&trial);
                    ll = trial_ll;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if !converged {
            // Re-check: halving may have landed on the optimum exactly.
            let mut score = vec![0.0; k];
            for (local, row) in block.rows().into_iter().enumerate() {
                let i = r0 + local;
                let x: f64 = row.iter().zip(seg.iter()).map(|(a, b)| a * b).sum();
                let rate = problem.offset[i] * clamp_exp_arg(x).exp();
                for (a, &xa) in row.iter().enumerate() {
                    score[a] += (problem.y[i] - rate) * xa;
                }
            }
            if grad_inf_norm(&score) >= tol {
                return Err(Error::NoConvergence {
                    iterations: 100,
                    context: format!("Poisson GLM block {b} did not converge"),
                });
            }
        }
    }
    Ok(beta)
}

/// Initial shape parameter `tau_0 = -n logit(pbar) / sum_i x_i` with
/// `pbar` the fraction of zero responses. Returns `(tau_0, degenerate)`;
/// the fallback value 1 is used (flagged) when `pbar` is 0 or 1 or the
/// denominator vanishes.
pub fn init_tau(problem: &ZipRegProblem, beta: &[f64]) -> (f64, bool) {
    let n = problem.n_obs() as f64;
    let zeros = problem.y.iter().filter(|&&v| v == 0.0).count() as f64;
    let pbar = zeros / n;
    if pbar <= 0.0 || pbar >= 1.0 {
        return (1.0, true);
    }
    let sum_x: f64 = problem.linear_predictor(beta).iter().sum();
    if sum_x.abs() < 1e-12 {
        return (1.0, true);
    }
    let logit = (pbar / (1.0 - pbar)).ln();
    (-n * logit / sum_x, false)
}

/// Fitted zero-inflated Poisson regression.
#[derive(Debug, Clone)]
pub struct ZipRegFit {
    /// Coefficients, concatenated block by block.
    pub beta: Vec<f64>,
    /// Shape parameter (unconstrained sign).
    pub tau: f64,
    /// Final E-step responsibilities; exactly 0 wherever `y_i > 0`.
    pub z: Vec<f64>,
    /// Observed-data log-likelihood at the solution.
    pub loglik: f64,
    /// EM iterations performed.
    pub iterations: usize,
    pub converged: bool,
    /// Observed-data log-likelihood after each EM iteration (the first entry
    /// is the value at the initial parameters).
    pub loglik_trace: Vec<f64>,
    /// True when the warm start diverged and the cold start was used.
    pub used_cold_start: bool,
}

fn em_loop(
    problem: &ZipRegProblem,
    mut beta: Vec<f64>,
    mut tau: f64,
) -> Result<(Vec<f64>, f64, Vec<f64>, usize, bool)> {
    let mut trace = Vec::new();
    let mut prev_ll = observed_loglik(problem, &beta, tau);
    if !prev_ll.is_finite() {
        return Err(Error::Numeric("non-finite log-likelihood at start".into()));
    }
    trace.push(prev_ll);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=EM_MAX_ITERATIONS {
        iterations = it;
        let z = e_step(problem, &beta, tau);
        let old_beta = beta.clone();
        let old_tau = tau;
        m_step(problem, &mut beta, &mut tau, &z)?;
        let ll = observed_loglik(problem, &beta, tau);
        if !ll.is_finite() {
            return Err(Error::Numeric("non-finite log-likelihood in EM".into()));
        }
        if ll < prev_ll - 1e-7 * prev_ll.abs().max(1.0) {
            return Err(Error::Numeric(format!(
                "EM log-likelihood decreased ({prev_ll} -> {ll})"
            )));
        }
        trace.push(ll);
        prev_ll = ll;
        // The 1 per-mille rule over the full parameter vector; tracking beta
        // alone can stop while the shape parameter is still drifting.
        let diff: f64 = beta
            .iter()
            .zip(&old_beta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            .hypot(tau - old_tau);
        let scale = old_beta
            .iter()
            .map(|b| b * b)
            .sum::<f64>()
            .sqrt()
            .hypot(old_tau)
            .max(1.0);
        if diff / scale < EM_REL_TOL {
            converged = true;
            break;
        }
    }
    Ok((beta, tau, trace, iterations, converged))
}

/// Fits the regression by EM with a Levenberg-Marquardt M step.
///
/// EM stops when the relative Frobenius change of `beta` between iterations
/// drops below 1e-3 or after [`EM_MAX_ITERATIONS`] (reported through
/// `converged`). Without `init`, `beta_0` comes from [`fit_poisson_glm`] and
/// `tau_0` from [`init_tau`]; a provided `init` is tried first and the cold
/// start is the fallback if it diverges.
pub fn fit_zip_regression(
    problem: &ZipRegProblem,
    init: Option<(&[f64], f64)>,
) -> Result<ZipRegFit> {
    problem.check_full_rank()?;

    let cold = || -> Result<(Vec<f64>, f64)> {
        let beta0 = fit_poisson_glm(problem)?;
        let (tau0, _) = init_tau(problem, &beta0);
        Ok((beta0, tau0))
    };

    let mut used_cold_start = false;
    let result = match init {
        Some((beta0, tau0)) if beta0.len() == problem.n_coef() && tau0.is_finite() => {
            match em_loop(problem, beta0.to_vec(), tau0) {
                Ok(r) => Ok(r),
                Err(_) => {
                    used_cold_start = true;
                    let (b, t) = cold()?;
                    em_loop(problem, b, t)
                }
            }
        }
        _ => {
            let (b, t) = cold()?;
            em_loop(problem, b, t)
        }
    };
    let (beta, tau, trace, iterations, converged) = result?;
    let z = e_step(problem, &beta, tau);
    let loglik = *trace.last().unwrap();
    Ok(ZipRegFit {
        beta,
        tau,
        z,
        loglik,
        iterations,
        converged,
        loglik_trace: trace,
        used_cold_start,
    })
}
