//! Projected gradient ascent over `{Q ⪰ 0, tr Q ≤ P}`.
//!
//! Shared by the input-covariance optimizer for the lower bounds and the
//! log-det upper bound. For a concave objective the Frank–Wolfe gap
//! `P·max(λ_max(∇f), 0) − tr(∇f Q)` upper-bounds `max f − f(Q)`.

use crate::linalg::{self, re, CMat};

#[derive(Debug, Clone, Copy)]
pub(crate) struct AscentOpts {
    pub max_iter: usize,
    /// Stop when the relative improvement of an accepted step falls below.
    pub rel_tol: f64,
    /// Stop when the concavity gap falls below `gap_tol · max(1, |f|)`.
    pub gap_tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct AscentResult {
    pub q: CMat,
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Frank–Wolfe duality gap at a feasible `q`.
pub(crate) fn concave_gap(grad: &CMat, q: &CMat, budget: f64) -> f64 {
    let lmax = linalg::lambda_max(grad).max(0.0);
    let inner = (grad * q).trace().re;
    (budget * lmax - inner).max(0.0)
}

pub(crate) fn projected_ascent<F>(q0: &CMat, budget: f64, eval: F, opts: AscentOpts) -> AscentResult
where
    F: Fn(&CMat) -> (f64, CMat),
{
    let mut q = linalg::project_trace_ball(q0, budget);
    let (mut value, mut grad) = eval(&q);
    let mut step = budget / linalg::lambda_max(&linalg::hermitian_part(&(&grad * grad.adjoint()))).sqrt().max(1e-300);
    let mut gap = concave_gap(&grad, &q, budget);
    let mut converged = false;
    let mut iterations = 0;
    let mut rejections = 0;

    while iterations < opts.max_iter {
        if let Some(tol) = opts.gap_tol {
            if gap <= tol * value.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        iterations += 1;
        let trial = linalg::project_trace_ball(&(&q + &grad * re(step)), budget);
        let (tv, tg) = eval(&trial);
        if tv.is_finite() && tv > value {
            let improvement = (tv - value) / value.abs().max(1.0);
            q = trial;
            value = tv;
            grad = tg;
            gap = concave_gap(&grad, &q, budget);
            step *= 1.5;
            rejections = 0;
            if opts.gap_tol.is_none() && improvement < opts.rel_tol {
                converged = true;
                break;
            }
        } else {
            step *= 0.5;
            rejections += 1;
            if rejections > 60 {
                // No ascent direction left at machine precision.
                converged = opts.gap_tol.is_none();
                break;
            }
        }
    }
    AscentResult {
        q,
        value,
        gap,
        iterations,
        converged,
    }
}

/// Classic waterfilling: maximize `Σ log(1 + g_i p_i)` s.t. `Σ p_i ≤ budget`.
pub(crate) fn waterfill(gains: &[f64], budget: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let mut powers = vec![0.0; gains.len()];
    if budget <= 0.0 || order.is_empty() {
        return powers;
    }
    let mut active = order.len();
    let mut level = 0.0;
    while active > 0 {
        let inv_sum: f64 = order[..active].iter().map(|&i| 1.0 / gains[i]).sum();
        level = (budget + inv_sum) / active as f64;
        if level - 1.0 / gains[order[active - 1]] > 0.0 {
            break;
        }
        active -= 1;
    }
    for &i in &order[..active] {
        powers[i] = (level - 1.0 / gains[i]).max(0.0);
    }
    powers
}

/// Waterfilling covariance for `log det(I + A Q Aᴴ)`: eigenvectors of `AᴴA`.
pub(crate) fn waterfill_cov(gram: &CMat, budget: f64) -> CMat {
    let (vals, vecs) = linalg::herm_eig(gram);
    let powers = waterfill(&vals, budget);
    linalg::hermitian_part(&linalg::from_eig(&powers, &vecs))
}
