//! Independent reference implementations used by the integration and
//! acceptance tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Exact maximiser of the SVM dual
/// `Σα − ½ ΣΣ αᵢαⱼ yᵢyⱼ Kᵢⱼ` subject to `0 ≤ α ≤ C`, `Σ αᵢyᵢ = 0`,
/// found by enumerating every assignment of each αᵢ to {0, C, free} and
/// solving the KKT system of the free part.
pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub bias: f64,
}

pub fn dual_value(q: &DMatrix<f64>, alpha: &[f64]) -> f64 {
    let a = DVector::from_column_slice(alpha);
    a.sum() - 0.5 * (a.transpose() * q * &a)[(0, 0)]
}

pub fn solve_svm_dual(gram: &[Vec<f64>], y: &[f64], c: f64) -> QpSolution {
    let n = y.len();
    assert!(n <= 10, "enumeration is exponential");
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * gram[i][j]);
    let feas_tol = 1e-9 * c.max(1.0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        // state 0: α = 0, 1: α = C, 2: free
        let mut state = vec![0u8; n];
        let mut k = code;
        for s in state.iter_mut() {
            *s = (k % 3) as u8;
            k /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        if free.is_empty() {
            let balance: f64 = alpha.iter().zip(y).map(|(a, yi)| a * yi).sum();
            if balance.abs() > feas_tol {
                continue;
            }
        } else {
            // [Q_FF  y_F] [α_F]   [1 − Q_FB α_B]
            // [y_Fᵀ  0  ] [ ν ] = [ −y_Bᵀ α_B  ]
            let m = free.len();
            let mut lhs = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    lhs[(a, b)] = q[(i, j)];
                }
                lhs[(a, m)] = y[i];
                lhs[(m, a)] = y[i];
                let bound: f64 = (0..n).filter(|j| state[*j] == 1).map(|j| q[(i, j)] * c).sum();
                rhs[a] = 1.0 - bound;
            }
            rhs[m] = -(0..n).filter(|j| state[*j] == 1).map(|j| y[j] * c).sum::<f64>();
            let svd = lhs.clone().svd(true, true);
            let Ok(sol) = svd.solve(&rhs, 1e-12) else { continue };
            if (&lhs * &sol - &rhs).norm() > 1e-7 * (1.0 + rhs.norm()) {
                continue;
            }
            let mut ok = true;
            for (a, &i) in free.iter().enumerate() {
                let v = sol[a];
                if v < -feas_tol || v > c + feas_tol {
                    ok = false;
                    break;
                }
                alpha[i] = v.clamp(0.0, c);
            }
            if !ok {
                continue;
            }
        }
        let obj = dual_value(&q, &alpha);
        if best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, alpha));
        }
    }
    let (objective, alpha) = best.expect("α = 0 is always feasible");
    let bias = oracle_bias(gram, y, &alpha, c);
    QpSolution { alpha, objective, bias }
}

/// Bias from the KKT conditions: mean over margin support vectors of
/// yᵢ − Σⱼ αⱼyⱼKᵢⱼ; without margin vectors, the midpoint of the interval the
/// bounded multipliers allow.
pub fn oracle_bias(gram: &[Vec<f64>], y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = y.len();
    let tol = 1e-9 * c.max(1.0);
    let f = |i: usize| (0..n).map(|j| alpha[j] * y[j] * gram[i][j]).sum::<f64>();
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > tol && alpha[i] < c - tol).collect();
    if !free.is_empty() {
        return free.iter().map(|&i| y[i] - f(i)).sum::<f64>() / free.len() as f64;
    }
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let r = y[i] - f(i);
        let at_upper = alpha[i] >= c - tol;
        // y_i f(x_i) ≥ 1 at α = 0, ≤ 1 at α = C
        let lower_bound = (y[i] > 0.0) != at_upper;
        if lower_bound {
            lo = lo.max(r);
        } else {
            hi = hi.min(r);
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo + hi) / 2.0,
        (true, false) => lo,
        (false, true) => hi,
        _ => 0.0,
    }
}

/// Continuous plot coordinates: x across all columns, y in the margin band
/// with larger values higher up.
pub fn plot_points(samples: &[f64], margin: f64, width: usize, height: usize) -> Vec<(f64, f64)> {
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let top = margin * (height - 1) as f64;
    let bottom = (1.0 - margin) * (height - 1) as f64;
    let n = samples.len();
    let mut out = Vec::with_capacity(n);
    for (i, &v) in samples.iter().enumerate() {
        let x = if n > 1 { i as f64 * ((width - 1) as f64 / (n - 1) as f64) } else { 0.0 };
        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        out.push((x, bottom - t * (bottom - top)));
    }
    out
}

/// Scanline reference: for each column, clip every segment to the column's
/// closed x-range and collect the heights it reaches; fill the rounded span.
/// Returns a row-major foreground mask.
pub fn scanline_raster(samples: &[f64], margin: f64, line_width: usize, width: usize, height: usize) -> Vec<bool> {
    let pts = plot_points(samples, margin, width, height);
    let mut mask = vec![false; width * height];
    for col in 0..width {
        let (xl, xr) = (col as f64 - 0.5, col as f64 + 0.5);
        let mut ys: Vec<f64> = Vec::new();
        if pts.len() == 1 {
            ys.push(pts[0].1);
        }
        for &(x, y) in &pts {
            if x >= xl && x <= xr {
                ys.push(y);
            }
        }
        for seg in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (seg[0], seg[1]);
            for edge in [xl, xr] {
                if edge > x0 && edge < x1 {
                    ys.push(y0 + (y1 - y0) * (edge - x0) / (x1 - x0));
                }
            }
        }
        if ys.is_empty() {
            continue;
        }
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min).round() as i64;
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max).round() as i64;
        let r0 = (lo - (line_width as i64 - 1) / 2).max(0);
        let r1 = (hi + line_width as i64 / 2).min(height as i64 - 1);
        for row in r0..=r1 {
            mask[row as usize * width + col] = true;
        }
    }
    mask
}

/// Amplitude response of an order-`n` Butterworth low-pass applied forward
/// and backward, i.e. its squared magnitude, for a bilinear design with the
/// cutoff pre-warped: the analogue formula at the warped frequency ratio.
pub fn butterworth_zero_phase_gain(f: f64, cutoff: f64, fs: f64, order: usize) -> f64 {
    let ratio = (std::f64::consts::PI * f / fs).tan() / (std::f64::consts::PI * cutoff / fs).tan();
    1.0 / (1.0 + ratio.powi(2 * order as i32))
}

/// The analogue prototype's squared magnitude at `f / cutoff`.
pub fn butterworth_analog_gain(f: f64, cutoff: f64, order: usize) -> f64 {
    1.0 / (1.0 + (f / cutoff).powi(2 * order as i32))
}

/// Least-squares amplitude of a sinusoid at `f` in `x[range]`.
pub fn sinusoid_amplitude(x: &[f64], fs: f64, f: f64, range: std::ops::Range<usize>) -> f64 {
    let (mut ss, mut cc, mut sc, mut xs, mut xc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in range {
        let w = std::f64::consts::TAU * f * i as f64 / fs;
        let (s, c) = w.sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        xs += x[i] * s;
        xc += x[i] * c;
    }
    let det = ss * cc - sc * sc;
    let a = (xs * cc - xc * sc) / det;
    let b = (xc * ss - xs * sc) / det;
    (a * a + b * b).sqrt()
}
