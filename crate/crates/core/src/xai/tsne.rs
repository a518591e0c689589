//! Exact t-SNE with perplexity calibration, early exaggeration, momentum and
//! per-coordinate gains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::svm::squared_distances;

const ENTROPY_TOL: f64 = 1e-10;
const CALIBRATION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated affinities and the initial momentum.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub init_sd: f64,
    /// KL divergence is recorded every this many iterations.
    pub trace_interval: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            seed: 0,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            init_sd: 1e-4,
            trace_interval: 50,
        }
    }
}

/// Outcome of the σ search for one point. `beta` is 1 / (2σ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStatus {
    pub beta: f64,
    pub entropy_bits: f64,
    /// False when the target entropy was out of reach.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneEmbedding {
    pub points: Vec<[f64; 2]>,
    pub kl: f64,
    /// `(iteration, KL)` pairs.
    pub trace: Vec<(usize, f64)>,
    pub calibration: Vec<CalibrationStatus>,
    pub config: TsneConfig,
}

/// Conditional affinities p_{j|i} (row-major, zero diagonal) from squared
/// distances, with each row's bandwidth chosen so its entropy is
/// log₂(perplexity).
pub fn calibrate_perplexity(sq_dist: &[f64], n: usize, perplexity: f64) -> (Vec<f64>, Vec<CalibrationStatus>) {
    let target = perplexity.ln();
    let rows: Vec<(Vec<f64>, CalibrationStatus)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = &sq_dist[i * n..(i + 1) * n];
            let min = (0..n).filter(|&j| j != i).map(|j| d[j]).fold(f64::INFINITY, f64::min);
            let mut beta = 1.0;
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            let mut p = vec![0.0; n];
            let mut entropy = 0.0;
            let mut converged = false;
            for _ in 0..CALIBRATION_STEPS {
                let mut sum = 0.0;
                let mut weighted = 0.0;
                for j in 0..n {
                    if j == i {
                        p[j] = 0.0;
                        continue;
                    }
                    let shifted = d[j] - min;
                    p[j] = (-beta * shifted).exp();
                    sum += p[j];
                    weighted += shifted * p[j];
                }
                entropy = sum.ln() + beta * weighted / sum;
                p.iter_mut().for_each(|v| *v /= sum);
                let diff = entropy - target;
                if diff.abs() < ENTROPY_TOL {
                    converged = true;
                    break;
                }
                if diff > 0.0 {
                    lo = beta;
                    beta = if hi.is_infinite() { beta * 2.0 } else { (beta + hi) / 2.0 };
                } else {
                    hi = beta;
                    beta = if lo.is_infinite() { beta / 2.0 } else { (beta + lo) / 2.0 };
                }
            }
            let status = CalibrationStatus {
                beta,
                entropy_bits: entropy / std::f64::consts::LN_2,
                converged,
            };
            (p, status)
        })
        .collect();
    let mut p = Vec::with_capacity(n * n);
    let mut status = Vec::with_capacity(n);
    for (row, s) in rows {
        p.extend(row);
        status.push(s);
    }
    (p, status)
}

fn check_input(x: &[Vec<f64>], perplexity: f64) -> Result<()> {
    let n = x.len();
    if n < 4 {
        return Err(HarError::config(format!("t-SNE needs at least 4 points, got {n}")));
    }
    if !(perplexity > 0.0) || perplexity >= n as f64 {
        return Err(HarError::config(format!(
            "perplexity {perplexity} must be positive and below the point count {n}"
        )));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(HarError::data("points have inconsistent dimensions"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(HarError::data("points contain non-finite values"));
    }
    Ok(())
}

/// Symmetrised joint affinities p_ij = (p_{j|i} + p_{i|j}) / 2N.
pub fn joint_probabilities(x: &[Vec<f64>], perplexity: f64) -> Result<(Vec<f64>, Vec<CalibrationStatus>)> {
    check_input(x, perplexity)?;
    let n = x.len();
    let (cond, status) = calibrate_perplexity(&squared_distances(x), n, perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    Ok((p, status))
}

fn kernel_row(points: &[[f64; 2]], i: usize, out: &mut [f64]) {
    let [xi, yi] = points[i];
    for (j, [xj, yj]) in points.iter().enumerate() {
        out[j] = if j == i {
            0.0
        } else {
            1.0 / (1.0 + (xi - xj).powi(2) + (yi - yj).powi(2))
        };
    }
}

fn normaliser(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |row, i| {
                kernel_row(points, i, row);
                row.iter().sum()
            },
        )
        .collect();
    sums.iter().sum()
}

/// Student-t joint affinities q_ij of an embedding (row-major).
pub fn student_t_affinities(points: &[[f64; 2]]) -> Vec<f64> {
    let n = points.len();
    let z = normaliser(points);
    let mut q = vec![0.0; n * n];
    for (i, row) in q.chunks_exact_mut(n).enumerate() {
        kernel_row(points, i, row);
        row.iter_mut().for_each(|v| *v /= z);
    }
    q
}

fn kl_divergence(p: &[f64], points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let z = normaliser(points);
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |row, i| {
                kernel_row(points, i, row);
                let mut acc = 0.0;
                for j in 0..n {
                    let pij = p[i * n + j];
                    if pij > 0.0 {
                        acc += pij * (pij / (row[j] / z).max(f64::MIN_POSITIVE)).ln();
                    }
                }
                acc
            },
        )
        .collect();
    rows.iter().sum()
}

pub fn tsne(x: &[Vec<f64>], config: &TsneConfig) -> Result<TsneEmbedding> {
    if !(config.learning_rate > 0.0) || config.iterations == 0 || config.trace_interval == 0 {
        return Err(HarError::config("t-SNE needs positive learning rate, iterations and trace interval"));
    }
    let (p, calibration) = joint_probabilities(x, config.perplexity)?;
    let n = x.len();
    let unconverged = calibration.iter().filter(|s| !s.converged).count();
    if unconverged > 0 {
        log::warn!("perplexity search hit its boundary for {unconverged} of {n} points");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.init_sd).map_err(|e| HarError::config(e.to_string()))?;
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut trace = Vec::new();

    for iter in 1..=config.iterations {
        let early = iter <= config.exaggeration_iters;
        let exaggeration = if early { config.early_exaggeration } else { 1.0 };
        let momentum = if early {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let z = normaliser(&y);
        let points = &y;
        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |row, i| {
                    kernel_row(points, i, row);
                    let mut g = [0.0; 2];
                    for j in 0..n {
                        let mult = (exaggeration * p[i * n + j] - row[j] / z) * row[j];
                        g[0] += mult * (points[i][0] - points[j][0]);
                        g[1] += mult * (points[i][1] - points[j][1]);
                    }
                    [4.0 * g[0], 4.0 * g[1]]
                },
            )
            .collect();
        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = if same_sign { gains[i][d] * 0.8 } else { gains[i][d] + 0.2 };
                gains[i][d] = gains[i][d].max(0.01);
                update[i][d] = momentum * update[i][d] - config.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        let mean = y.iter().fold([0.0; 2], |acc, v| [acc[0] + v[0], acc[1] + v[1]]);
        for v in &mut y {
            v[0] -= mean[0] / n as f64;
            v[1] -= mean[1] / n as f64;
        }
        if iter % config.trace_interval == 0 || iter == config.iterations {
            trace.push((iter, kl_divergence(&p, &y)));
        }
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(HarError::data("t-SNE diverged to non-finite coordinates"));
    }
    let kl = trace.last().map_or(f64::NAN, |t| t.1);
    Ok(TsneEmbedding {
        points: y,
        kl,
        trace,
        calibration,
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                v
            })
            .collect()
    }

    #[test]
    fn simplex_rows_are_uniform() {
        let x = simplex(6);
        let (cond, status) = calibrate_perplexity(&squared_distances(&x), 6, 5.0);
        for (i, s) in status.iter().enumerate() {
            assert!(s.converged);
            assert!((s.entropy_bits - 5f64.log2()).abs() < 1e-4);
            for j in 0..6 {
                let expected = if i == j { 0.0 } else { 0.2 };
                assert!((cond[i * 6 + j] - expected).abs() < 1e-12);
            }
        }
        let (_, status) = calibrate_perplexity(&squared_distances(&x), 6, 3.0);
        assert!(status.iter().all(|s| !s.converged));
    }

    #[test]
    fn perplexity_must_be_below_count() {
        let x = simplex(5);
        let cfg = TsneConfig {
            perplexity: 5.0,
            ..Default::default()
        };
        assert!(matches!(tsne(&x, &cfg), Err(HarError::Config(_))));
        assert!(tsne(&simplex(3), &TsneConfig { perplexity: 1.0, ..Default::default() }).is_err());
    }

    #[test]
    fn duplicates_are_handled() {
        let mut x = vec![vec![1.0, 2.0]; 5];
        x.push(vec![3.0, 3.0]);
        let cfg = TsneConfig {
            perplexity: 2.0,
            iterations: 60,
            ..Default::default()
        };
        let out = tsne(&x, &cfg).unwrap();
        assert!(out.points.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn affinities_are_distributions() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64).sin(), (i * i) as f64 * 0.1, i as f64]).collect();
        let (p, _) = joint_probabilities(&x, 4.0).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..12 {
            for j in 0..12 {
                assert!(p[i * 12 + j] >= 0.0);
                assert!((p[i * 12 + j] - p[j * 12 + i]).abs() < 1e-15);
            }
        }
        let pts: Vec<[f64; 2]> = (0..12).map(|i| [i as f64, (i % 3) as f64]).collect();
        let q = student_t_affinities(&pts);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn runs_are_bit_identical() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.7).cos(), (i % 4) as f64]).collect();
        let cfg = TsneConfig {
            perplexity: 5.0,
            iterations: 120,
            seed: 4,
            ..Default::default()
        };
        assert_eq!(tsne(&x, &cfg).unwrap(), tsne(&x, &cfg).unwrap());
    }
}
