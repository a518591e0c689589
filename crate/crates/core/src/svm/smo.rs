//! Sequential minimal optimization for the C-SVM dual
//!
//! ```text
//! min  ½ αᵀQα − Σ α_i    s.t.  0 ≤ α_i ≤ C,  Σ y_i α_i = 0,   Q_ij = y_i y_j K_ij
//! ```
//!
//! Each step takes the maximal violating pair (first-order working-set
//! selection) and solves the two-variable subproblem in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoOptions {
    /// Stop once the maximal KKT violation `m(α) − M(α)` is at most this.
    pub tol: f64,
    /// Iteration cap; 0 means `max(10⁷, 100·n)`.
    pub max_iter: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        Self { tol: 1e-3, max_iter: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision function is `Σ α_i y_i K(x_i, x) + bias`.
    pub bias: f64,
    /// `Σ α_i − ½ αᵀQα`, the maximisation form of the dual.
    pub objective: f64,
    pub iterations: usize,
    /// Final `m(α) − M(α)`.
    pub max_violation: f64,
}

/// Dual objective `Σ α_i − ½ αᵀQα` for a kernel matrix and ±1 labels.
pub fn dual_objective(gram: &[f64], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            row += alpha[j] * y[j] * gram[i * n + j];
        }
        quad += alpha[i] * y[i] * row;
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Solves the dual for an n×n row-major kernel matrix and labels in {−1, +1}.
pub fn solve_dual(gram: &[f64], y: &[f64], c: f64, opts: &SmoOptions) -> Result<DualSolution> {
    let n = y.len();
    if gram.len() != n * n {
        return Err(HarError::config(format!("kernel matrix must be {n}×{n}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(HarError::config(format!("C must be positive, got {c}")));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(HarError::data("labels must be +1 or -1"));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(HarError::data("binary SVM needs examples of both labels"));
    }
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(HarError::data("kernel matrix has non-finite entries"));
    }

    let q = |i: usize, j: usize| y[i] * y[j] * gram[i * n + j];
    let max_iter = if opts.max_iter == 0 {
        10_000_000usize.max(100 * n)
    } else {
        opts.max_iter
    };
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let mut iterations = 0;
    let mut violation;

    loop {
        // i maximises −y_t G_t over I_up, j minimises it over I_low
        let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        violation = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || violation <= opts.tol {
            break;
        }
        if iterations >= max_iter {
            log::warn!("SMO stopped at the iteration cap ({max_iter}) with violation {violation:.3e}");
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = old_i - old_j;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = old_i + old_j;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    let bias = -rho(&alpha, &grad, y, c);
    Ok(DualSolution {
        objective: dual_objective(gram, y, &alpha),
        alpha,
        bias,
        iterations,
        max_violation: violation.max(0.0),
    })
}

/// Threshold: mean of `y_i G_i` over free variables, or the midpoint of the
/// feasible interval when every variable sits at a bound.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
