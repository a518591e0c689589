//! Linear softmax head over pooled image features, trained with mini-batch
//! gradient descent on mean cross-entropy.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::label::ActivityLabel;
use crate::svm::Standardizer;

pub const HEAD_FILE_MAGIC: &[u8; 4] = b"HARH";
pub const HEAD_FILE_VERSION: u8 = 1;

/// Training loss is recorded at step 0 and then every this many steps.
pub const LOSS_INTERVAL: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    pub classes: Vec<ActivityLabel>,
    pub dim: usize,
    /// Row-major `classes × dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Train on per-dimension standardised features, then fold the scaling
    /// into the weights and bias so the head applies to raw features.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            learning_rate: 0.01,
            batch_size: 100,
            seed: 0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(HarError::config("softmax steps must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(HarError::config("softmax learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(HarError::config("softmax batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTraining {
    pub head: SoftmaxHead,
    pub history: Vec<LossPoint>,
}

/// Gradient of the mean cross-entropy, shaped like the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Probabilities from logits, shifting by the maximum first.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

impl SoftmaxHead {
    pub fn zeros(dim: usize) -> Self {
        Self {
            classes: ActivityLabel::ALL.to_vec(),
            dim,
            weights: vec![0.0; ActivityLabel::COUNT * dim],
            bias: vec![0.0; ActivityLabel::COUNT],
        }
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Weight row of one class over the feature channels.
    pub fn class_weights(&self, class: ActivityLabel) -> Option<&[f64]> {
        let row = self.classes.iter().position(|&c| c == class)?;
        Some(&self.weights[row * self.dim..(row + 1) * self.dim])
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(HarError::config(format!(
                "feature has {} values, head expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.logits_unchecked(x))
    }

    fn logits_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Most probable class; ties go to the earlier class.
    pub fn predict(&self, x: &[f64]) -> Result<ActivityLabel> {
        let p = self.predict_proba(x)?;
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        Ok(self.classes[best])
    }

    fn row_of(&self, label: ActivityLabel) -> Result<usize> {
        self.classes
            .iter()
            .position(|&c| c == label)
            .ok_or_else(|| HarError::data(format!("label {label} is not a head class")))
    }

    /// Mean cross-entropy over `x[i]` for `i` in `batch` and its gradient.
    pub fn loss_and_gradient(
        &self,
        x: &[Vec<f64>],
        y: &[ActivityLabel],
        batch: &[usize],
    ) -> Result<(f64, Gradient)> {
        if batch.is_empty() {
            return Err(HarError::data("empty batch"));
        }
        let mut grad = Gradient {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        };
        let mut loss = 0.0;
        for &i in batch {
            self.check_dim(&x[i])?;
            let target = self.row_of(y[i])?;
            let z = self.logits_unchecked(&x[i]);
            loss += log_sum_exp(&z) - z[target];
            let p = softmax(&z);
            for (c, pc) in p.iter().enumerate() {
                let delta = pc - if c == target { 1.0 } else { 0.0 };
                grad.bias[c] += delta;
                let row = &mut grad.weights[c * self.dim..(c + 1) * self.dim];
                for (g, v) in row.iter_mut().zip(&x[i]) {
                    *g += delta * v;
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        grad.weights.iter_mut().for_each(|g| *g *= scale);
        grad.bias.iter_mut().for_each(|g| *g *= scale);
        Ok((loss * scale, grad))
    }

    pub fn mean_loss(&self, x: &[Vec<f64>], y: &[ActivityLabel]) -> Result<f64> {
        let all: Vec<usize> = (0..x.len()).collect();
        let mut loss = 0.0;
        for &i in &all {
            self.check_dim(&x[i])?;
            let z = self.logits_unchecked(&x[i]);
            loss += log_sum_exp(&z) - z[self.row_of(y[i])?];
        }
        Ok(loss / x.len().max(1) as f64)
    }

    /// Rewrites a head trained on `(x - mean) / scale` to act on raw `x`.
    fn fold_standardizer(&mut self, s: &Standardizer) {
        for (row, b) in self.weights.chunks_exact_mut(self.dim).zip(&mut self.bias) {
            for ((w, m), sd) in row.iter_mut().zip(&s.mean).zip(&s.scale) {
                *w /= sd;
                *b -= *w * m;
            }
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(HEAD_FILE_MAGIC)?;
        w.write_u8(HEAD_FILE_VERSION)?;
        w.write_u8(self.classes.len() as u8)?;
        for c in &self.classes {
            w.write_u8(c.index() as u8)?;
        }
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        for &v in self.weights.iter().chain(&self.bias) {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != HEAD_FILE_MAGIC {
            return Err(HarError::Format("not a softmax head file".into()));
        }
        let version = r.read_u8()?;
        if version != HEAD_FILE_VERSION {
            return Err(HarError::Format(format!("unsupported head version {version}")));
        }
        let k = r.read_u8()? as usize;
        let mut classes = Vec::with_capacity(k);
        for _ in 0..k {
            let idx = r.read_u8()? as usize;
            classes.push(
                ActivityLabel::from_index(idx)
                    .ok_or_else(|| HarError::Format(format!("bad class index {idx}")))?,
            );
        }
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let mut raw = vec![0f32; k * dim + k];
        r.read_f32_into::<LittleEndian>(&mut raw)?;
        let values: Vec<f64> = raw.into_iter().map(f64::from).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HarError::Format("head contains non-finite parameters".into()));
        }
        Ok(Self {
            classes,
            dim,
            weights: values[..k * dim].to_vec(),
            bias: values[k * dim..].to_vec(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

/// Trains a zero-initialised head for `cfg.steps` mini-batch steps. Batches
/// walk a seeded permutation of the data, reshuffled at each epoch.
pub fn train_softmax(x: &[Vec<f64>], y: &[ActivityLabel], cfg: &TrainConfig) -> Result<SoftmaxTraining> {
    cfg.validate()?;
    if x.len() != y.len() || x.is_empty() {
        return Err(HarError::data("features and labels must be non-empty and of equal length"));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(HarError::data("features have inconsistent dimensions"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(HarError::data("features contain non-finite values"));
    }
    for class in ActivityLabel::ALL {
        if !y.contains(&class) {
            return Err(HarError::data(format!("no training examples for class {class}")));
        }
    }

    let scaler = cfg.standardize.then(|| Standardizer::fit(x));
    let scaled;
    let x = match &scaler {
        Some(s) => {
            scaled = s.transform(x);
            &scaled[..]
        }
        None => x,
    };

    let mut head = SoftmaxHead::zeros(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let batch_size = cfg.batch_size.min(x.len());
    let mut history = vec![LossPoint {
        step: 0,
        loss: head.mean_loss(x, y)?,
    }];

    for step in 1..=cfg.steps {
        if cursor + batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch = &order[cursor..cursor + batch_size];
        cursor += batch_size;
        let (_, grad) = head.loss_and_gradient(x, y, batch)?;
        for (w, g) in head.weights.iter_mut().zip(&grad.weights) {
            *w -= cfg.learning_rate * g;
        }
        for (b, g) in head.bias.iter_mut().zip(&grad.bias) {
            *b -= cfg.learning_rate * g;
        }
        if step % LOSS_INTERVAL == 0 || step == cfg.steps {
            history.push(LossPoint {
                step,
                loss: head.mean_loss(x, y)?,
            });
        }
    }
    if let Some(s) = &scaler {
        head.fold_standardizer(s);
    }
    Ok(SoftmaxTraining { head, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<ActivityLabel>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, class) in ActivityLabel::ALL.iter().enumerate() {
            for j in 0..10 {
                let mut v = vec![0.1 * j as f64; 4];
                v[c] += 3.0;
                x.push(v);
                y.push(*class);
            }
        }
        (x, y)
    }

    #[test]
    fn zero_head_is_uniform() {
        let head = SoftmaxHead::zeros(5);
        for p in head.predict_proba(&[1.0, -2.0, 3.0, 0.0, 9.0]).unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn first_loss_is_ln4() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            steps: 1,
            ..Default::default()
        };
        let out = train_softmax(&x, &y, &cfg).unwrap();
        assert!((out.history[0].loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_logit_case() {
        let p = softmax(&[1.0, 0.0]);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = softmax(&[1000.0, 999.0, -1000.0, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separable_data_is_learned() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            steps: 2000,
            learning_rate: 0.1,
            batch_size: 8,
            seed: 3,
            standardize: false,
        };
        let out = train_softmax(&x, &y, &cfg).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(out.head.predict(xi).unwrap(), *yi);
        }
        assert_eq!(out.history.len(), 21);
    }

    #[test]
    fn folded_standardisation_matches_scaled_training() {
        let (x, y) = toy();
        let x: Vec<Vec<f64>> = x.into_iter().map(|r| r.iter().enumerate().map(|(i, v)| v * (i + 1) as f64 + 5.0).collect()).collect();
        let cfg = TrainConfig {
            steps: 300,
            batch_size: 10,
            ..Default::default()
        };
        let folded = train_softmax(&x, &y, &cfg).unwrap();
        let s = Standardizer::fit(&x);
        let xs = s.transform(&x);
        let plain = train_softmax(&xs, &y, &TrainConfig { standardize: false, ..cfg }).unwrap();
        assert_eq!(folded.history, plain.history);
        for (raw, scaled) in x.iter().zip(&xs) {
            let a = folded.head.logits(raw).unwrap();
            let b = plain.head.logits(scaled).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            steps: 150,
            batch_size: 7,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(train_softmax(&x, &y, &cfg).unwrap(), train_softmax(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn missing_class_is_rejected() {
        let (x, y) = toy();
        let cut = 30;
        assert!(matches!(
            train_softmax(&x[..cut], &y[..cut], &TrainConfig::default()),
            Err(HarError::Data(_))
        ));
    }

    #[test]
    fn bad_config_is_rejected() {
        let (x, y) = toy();
        for cfg in [
            TrainConfig { steps: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
        ] {
            assert!(matches!(train_softmax(&x, &y, &cfg), Err(HarError::Config(_))));
        }
    }

    #[test]
    fn serialization_round_trip_is_f32_exact() {
        let (x, y) = toy();
        let cfg = TrainConfig {
            steps: 100,
            ..Default::default()
        };
        let head = train_softmax(&x, &y, &cfg).unwrap().head;
        let mut buf = Vec::new();
        head.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 1 + 1 + 4 + 4 + 4 * (4 * 4 + 4));
        let back = SoftmaxHead::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.classes, head.classes);
        for (a, b) in back.weights.iter().zip(&head.weights) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    proptest! {
        #[test]
        fn uniform_logit_shift_is_invariant(
            z in prop::collection::vec(-50.0f64..50.0, 4),
            shift in -100.0f64..100.0,
        ) {
            let a = softmax(&z);
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let b = softmax(&shifted);
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
