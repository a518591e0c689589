use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(HarError::config(format!("rbf gamma must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// Unchecked evaluation; callers guarantee equal lengths.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => (-gamma * sq_dist(a, b)).exp(),
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(-gamma · ‖x − y‖²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(HarError::config(format!(
            "kernel inputs differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let k = Kernel::Rbf { gamma };
    k.validate()?;
    Ok(k.eval(x, y))
}

/// Symmetric n×n matrix of squared Euclidean distances, row-major.
pub fn squared_distances(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i + 1..n).map(|j| sq_dist(&rows[i], &rows[j])).collect())
        .collect();
    let mut d = vec![0.0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// `a.len() × b.len()` matrix of squared distances, row-major.
pub fn cross_squared_distances(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    a.par_iter()
        .flat_map_iter(|x| b.iter().map(move |y| sq_dist(x, y)))
        .collect()
}

pub fn gram_matrix(kernel: &Kernel, rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    match *kernel {
        Kernel::Rbf { gamma } => squared_distances(rows).into_iter().map(|d| (-gamma * d).exp()).collect(),
        Kernel::Linear => {
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    g[i * n + j] = kernel.eval(&rows[i], &rows[j]);
                }
            }
            g
        }
    }
}
